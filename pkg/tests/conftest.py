from linefail.ingest import FeatureKind, SparseRow, parse_feature_name


def make_row(row_id, numeric=None, date=None, categorical=None, label=None):
    """SparseRow from {feature name: value} mappings."""
    return SparseRow(
        id=row_id,
        numeric=[(parse_feature_name(k), v) for k, v in (numeric or {}).items()],
        date=[(parse_feature_name(k), v) for k, v in (date or {}).items()],
        categorical=[
            (parse_feature_name(k, FeatureKind.CATEGORICAL), v)
            for k, v in (categorical or {}).items()
        ],
        label=label,
    )
