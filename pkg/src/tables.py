from enum import Enum
from typing import Sequence, NamedTuple


class Calculation(Enum):
    SUM = 'sum'
    AVG = 'mean'
    COUNT = 'count'


class Value(NamedTuple):
    field: str
    calculation: Calculation
    number_format: str = '0.00'


class Fields(NamedTuple):
    values: Sequence[Value]
    rows: Sequence[str] = tuple()
    columns: Sequence[str] = tuple()


class PivotTable(NamedTuple):
    name: str
    fields: Fields


SECTOR_TABLES = (
    PivotTable(
        'Tonnes by sector',
        Fields(
            rows=('sector_start_deg',),
            columns=('year',),
            values=(Value('tonnes', Calculation.SUM),),
        )
    ),
    PivotTable(
        'Days by sector',
        Fields(
            rows=('sector_start_deg',),
            columns=('year',),
            values=(Value('days', Calculation.SUM, '0'),),
        )
    ),
)

SCENARIO_TABLES = (
    PivotTable(
        'Target tonnes',
        Fields(
            rows=('sector_start_deg',),
            columns=('year',),
            values=(
                Value('tonnes', Calculation.SUM),
                Value('target_tonnes', Calculation.SUM),
            )
        )
    ),
    PivotTable(
        'Reduction',
        Fields(
            rows=('sector_start_deg',),
            columns=('year',),
            values=(Value('reduction_pct', Calculation.AVG, '0.0'),),
        )
    ),
)
