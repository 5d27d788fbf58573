import logging
import os

from pathlib import Path
from typing import Iterable, Set, Union

import pandas as pd

from . import errors
from .tables import PivotTable


logger = logging.getLogger(__name__)

SOURCE_SHEET_NAME = 'Data'
ADD_GRAND_TOTAL = True


def get_required_fields(table: PivotTable) -> Set[str]:
    fields = set()
    for source in (
        table.fields.columns,
        table.fields.rows, (value.field for value in table.fields.values)
    ):
        for field in source:
            fields.add(field)
    return fields


def validate_fields_exist(available: Iterable[str], table: PivotTable) -> None:
    missing = get_required_fields(table).difference(available)
    if missing:
        raise errors.FormatError(f'Pivot table "{table.name}" needs missing fields {sorted(missing)}')


def pivot(data: pd.DataFrame, table: PivotTable) -> pd.DataFrame:
    """Computes the pivot described by ``table`` from a flat summary frame.

    Args:
        data: Flat rows, one per (year, sector) for the bundled tables.
        table: A pivot table specification with rows, columns and values.

    Returns:
        A frame indexed by the row fields with one column per (value, column key).
    """

    validate_fields_exist(data.columns, table)
    out = pd.pivot_table(
        data,
        index=list(table.fields.rows) or None,
        columns=list(table.fields.columns) or None,
        values=[value.field for value in table.fields.values],
        aggfunc={value.field: value.calculation.value for value in table.fields.values},
        margins=ADD_GRAND_TOTAL,
        margins_name='Total',
        dropna=False,
    )
    return out


def write_report(
    data: pd.DataFrame,
    path: Union[str, os.PathLike],
    tables: Iterable[PivotTable],
) -> Path:
    """Writes the flat data sheet followed by one sheet per pivot table."""

    path = Path(path).resolve()
    sheets = [(table, pivot(data, table)) for table in tables]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with pd.ExcelWriter(path, engine='openpyxl') as writer:
            data.to_excel(writer, sheet_name=SOURCE_SHEET_NAME, index=False)
            for table, frame in sheets:
                frame.to_excel(writer, sheet_name=table.name[:31])
                _apply_number_format(writer.sheets[table.name[:31]], table)
    except OSError:
        raise errors.WriteFileError(path) from None
    logger.info('Wrote %d pivot sheet(s) to %s', len(sheets), path)
    return path


def _apply_number_format(sheet: object, table: PivotTable) -> None:
    number_format = table.fields.values[0].number_format
    for row in sheet.iter_rows(min_row=1, min_col=2):
        for cell in row:
            if isinstance(cell.value, (int, float)):
                cell.number_format = number_format
