from picse_match.data.dataset import CenteredSample, Sample, center, load_csv

__all__ = ["CenteredSample", "Sample", "center", "load_csv"]
