"""Radial bar charts of yearly sector emissions."""

import logging
import os

from pathlib import Path
from typing import Sequence, Union

import numpy as np
import matplotlib as mpl
mpl.use('Agg')

import matplotlib.pyplot as plt

from . import errors
from .analysis import SectorEmissionSummary


logger = logging.getLogger(__name__)

FIGSIZE = (6.0, 6.0)


def sector_rose(summaries: Sequence[SectorEmissionSummary], path: Union[str, os.PathLike], title: str = '') -> Path:
    """Draws one year's sector totals as a compass-oriented polar bar chart (SVG)."""

    path = Path(path)
    if not summaries:
        raise errors.EmptyInputError('no sector totals to plot')

    width = np.deg2rad(summaries[0].width)
    theta = np.array([np.deg2rad(s.start_deg) for s in summaries]) + width / 2
    tonnes = np.array([s.tonnes for s in summaries])

    # svg ids and timestamps must not change between identical runs
    with mpl.rc_context({'svg.hashsalt': 'pondflux', 'svg.fonttype': 'none'}):
        fig, ax = plt.subplots(figsize=FIGSIZE, subplot_kw={'projection': 'polar'})
        try:
            ax.set_theta_zero_location('N')
            ax.set_theta_direction(-1)
            ax.bar(theta, tonnes, width=width * 0.9, edgecolor='black', linewidth=0.5)
            ax.set_title(title or f'Methane emissions by wind sector, {summaries[0].year} (tonnes)')
            path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, format='svg', metadata={'Date': None})
        except OSError:
            raise errors.WriteFileError(path) from None
        finally:
            plt.close(fig)
    logger.debug('Plotted %d sectors to %s', len(summaries), path)
    return path
