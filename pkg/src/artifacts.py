"""Model artifacts and run manifests."""

import hashlib
import json
import logging
import os

from pathlib import Path
from typing import Any, Dict, Mapping, NamedTuple, Optional, Union

import numpy as np

from . import errors
from .formulations import ModelKind, ModelParams
from .ingest import Scaler
from .netcore import Activation, DenseNet, Layer
from .version import ARTIFACT_FORMAT, __version__, format_version, is_dev_version


logger = logging.getLogger(__name__)

MANIFEST_FILE = 'manifest.json'
CONFIG_FILE = 'config.ini'


class ModelArtifact(NamedTuple):
    params: ModelParams
    scaler: Scaler
    meta: Dict[str, Any]


def _net_arrays(prefix: str, net: DenseNet, arrays: Dict[str, np.ndarray]) -> list:
    layout = []
    for i, layer in enumerate(net.layers):
        arrays[f'{prefix}_w{i}'] = layer.weight
        arrays[f'{prefix}_b{i}'] = layer.bias
        layout.append({'shape': list(layer.weight.shape), 'activation': layer.activation.value})
    return layout


def _net_from_arrays(prefix: str, layout: list, arrays: Mapping[str, np.ndarray]) -> DenseNet:
    layers = []
    for i, entry in enumerate(layout):
        weight = np.array(arrays[f'{prefix}_w{i}'], dtype=float)
        bias = np.array(arrays[f'{prefix}_b{i}'], dtype=float)
        if list(weight.shape) != list(entry['shape']) or bias.shape != (weight.shape[0],):
            raise errors.ArtifactError(f'layer {i} of "{prefix}" has inconsistent shapes')
        layers.append(Layer(weight, bias, Activation(entry['activation'])))
    return DenseNet(tuple(layers))


def save_model(
    path: Union[str, os.PathLike],
    params: ModelParams,
    scaler: Scaler,
    meta: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Writes parameters, layer layout and the dataset scaler into one ``.npz``."""

    path = Path(path)
    arrays: Dict[str, np.ndarray] = {}
    header = {
        'format': ARTIFACT_FORMAT,
        'version': __version__,
        'kind': params.kind.value,
        't_index': params.t_index,
        'u_net': _net_arrays('u', params.u_net, arrays),
        'phi_net': _net_arrays('phi', params.phi_net, arrays) if params.phi_net is not None else None,
        'has_coeffs': params.coeffs is not None,
        'scaler_columns': list(scaler.columns),
        'scaler_roles': list(scaler.roles),
        'meta': dict(meta or {}),
    }
    if params.coeffs is not None:
        arrays['coeffs'] = params.coeffs
    arrays['scaler_min'] = scaler.mins
    arrays['scaler_max'] = scaler.maxs

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'wb') as handle:
            np.savez(handle, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    except OSError:
        raise errors.WriteFileError(path) from None
    logger.debug('Saved %s model to %s', params.kind.value, path)
    return path


def load_model(path: Union[str, os.PathLike]) -> ModelArtifact:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {name: data[name] for name in data.files}
    except FileNotFoundError:
        raise errors.OpenFileError(path) from None
    except (OSError, ValueError):
        raise errors.ArtifactError('not a model archive', path) from None

    if 'header' not in arrays:
        raise errors.ArtifactError('missing header', path)
    header = json.loads(str(arrays['header']))
    if header.get('format') != ARTIFACT_FORMAT:
        raise errors.ArtifactError(f'unsupported format {header.get("format")}', path)
    if 'scaler_min' not in arrays or 'scaler_max' not in arrays:
        raise errors.ArtifactError('missing dataset scaler', path)

    try:
        u_net = _net_from_arrays('u', header['u_net'], arrays)
        phi_net = _net_from_arrays('phi', header['phi_net'], arrays) if header['phi_net'] else None
        coeffs = np.array(arrays['coeffs'], dtype=float) if header['has_coeffs'] else None
        params = ModelParams(ModelKind(header['kind']), u_net, phi_net, coeffs, int(header['t_index']))
    except (KeyError, ValueError) as error:
        raise errors.ArtifactError(f'incomplete parameters ({error})', path) from None

    scaler = Scaler(
        tuple(header['scaler_columns']),
        np.array(arrays['scaler_min'], dtype=float),
        np.array(arrays['scaler_max'], dtype=float),
        tuple(header.get('scaler_roles', ())),
    )
    return ModelArtifact(params, scaler, header.get('meta', {}))


def hash_file(path: Union[str, os.PathLike, None]) -> str:
    if path is None:
        return ''
    hasher = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            hasher.update(chunk)
    return hasher.hexdigest()


def hash_text(text: str) -> str:
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def write_manifest(
    directory: Union[str, os.PathLike],
    command: str,
    config_text: str,
    inputs: Mapping[str, Union[str, os.PathLike, None]],
    outputs: Mapping[str, Union[str, os.PathLike]] = (),
) -> Path:
    """Records what produced a run directory: command, config and input hashes, tool version."""

    directory = Path(directory)
    manifest = {
        'command': command,
        'tool_version': __version__,
        'release': format_version(__version__),
        'dev_build': is_dev_version(__version__),
        'config_sha256': hash_text(config_text),
        'inputs': {
            name: {'path': str(path), 'sha256': hash_file(path)}
            for name, path in sorted(inputs.items()) if path is not None and Path(path).exists()
        },
        'outputs': sorted(str(Path(p).name) for p in dict(outputs).values()),
    }
    try:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / CONFIG_FILE).write_text(config_text)
        path = directory / MANIFEST_FILE
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError:
        raise errors.WriteFileError(directory) from None
    return path
