import pytest

from fedtrust.decision_tree import HistoryDataset, InteractionRecord, TrustStatus

YES = TrustStatus.TRUSTWORTHY
NO = TrustStatus.UNTRUSTWORTHY

# Ten labeled server interactions: 6 trustworthy / 4 not, with S4 the
# only server whose rows are mixed.
HISTORY_ROWS = [
    ("S1", "Asia", 99.05, YES),
    ("S1", "America", 100.0, YES),
    ("S2", "Africa", 99.37, YES),
    ("S2", "Africa", 99.88, YES),
    ("S3", "America", 99.54, NO),
    ("S4", "Asia", 73.69, NO),
    ("S4", "America", 97.62, YES),
    ("S4", "America", 92.42, YES),
    ("S4", "Africa", 87.62, NO),
    ("S4", "Europe", 82.42, NO),
]


@pytest.fixture
def history_dataset() -> HistoryDataset:
    records = tuple(
        InteractionRecord(server_id=s, location=loc, trust_score=score, trust_status=status)
        for s, loc, score, status in HISTORY_ROWS
    )
    return HistoryDataset(records=records)
