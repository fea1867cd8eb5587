"""scikit-learn style wrappers over the functional API.

The estimators hold parameters only; all behaviour lives in :mod:`detect`,
:mod:`ties` and :mod:`entropy`. ``X`` is a :class:`~linklens.ingest.Dataset`
or a bundle directory.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .detect import (
    ALL_SCENARIOS,
    REGISTRATION_FLOOR_WEI,
    Scenario,
    detect_bonus_hunters,
    detect_wash_trading,
    infer_cross_layer_links,
)
from .entropy import TWO_DAYS, entropy_series
from .errors import ParameterError
from .ties import classify_ties, holding_relation
from .validation import check_dataset, check_mode, check_positive_int, check_real

__all__ = [
    "BonusHunterDetector",
    "WashTradingDetector",
    "CrossLayerLinker",
    "TieClassifier",
    "EntropySeriesTransformer",
]


class _Detector(BaseEstimator):
    def predict(self, X):
        return self.fit(X).findings_

    def fit_predict(self, X, y=None):
        return self.fit(X, y).findings_


class BonusHunterDetector(_Detector):
    def __init__(self, ratio_min=5.0, min_subsidiaries=2, min_sells=3, max_gap_seconds=None):
        self.ratio_min = ratio_min
        self.min_subsidiaries = min_subsidiaries
        self.min_sells = min_sells
        self.max_gap_seconds = max_gap_seconds

    def fit(self, X, y=None):
        ds = check_dataset(X)
        gap = self.max_gap_seconds
        if gap is not None:
            gap = check_positive_int("max_gap_seconds", gap, minimum=0)
        self.findings_ = detect_bonus_hunters(
            ds,
            ratio_min=check_real("ratio_min", self.ratio_min),
            min_subsidiaries=check_positive_int("min_subsidiaries", self.min_subsidiaries, 2),
            min_sells=check_positive_int("min_sells", self.min_sells),
            max_gap_seconds=gap,
        )
        return self


class WashTradingDetector(_Detector):
    def __init__(self, registration_floor_wei=REGISTRATION_FLOOR_WEI, window_threshold=0.5):
        self.registration_floor_wei = registration_floor_wei
        self.window_threshold = window_threshold

    def fit(self, X, y=None):
        result = detect_wash_trading(
            check_dataset(X),
            registration_floor_wei=check_positive_int("registration_floor_wei", self.registration_floor_wei, 0),
            window_threshold=check_real("window_threshold", self.window_threshold, 0.0, 1.0),
        )
        self.findings_ = result.findings
        self.windows_ = result.windows
        self.daily_ = result.daily
        return self


class CrossLayerLinker(_Detector):
    def __init__(
        self,
        scenarios=tuple(s.value for s in ALL_SCENARIOS),
        ratio_min=5.0,
        min_sells=3,
        registration_floor_wei=REGISTRATION_FLOOR_WEI,
        max_hops=2,
    ):
        self.scenarios = scenarios
        self.ratio_min = ratio_min
        self.min_sells = min_sells
        self.registration_floor_wei = registration_floor_wei
        self.max_hops = max_hops

    def fit(self, X, y=None):
        ds = check_dataset(X)
        try:
            scenarios = [Scenario(s) for s in self.scenarios]
        except ValueError as exc:
            raise ParameterError(str(exc)) from None
        ratio = check_real("ratio_min", self.ratio_min)
        sells = check_positive_int("min_sells", self.min_sells)
        ties = classify_ties(holding_relation(ds), check_positive_int("max_hops", self.max_hops, 2))
        hunters = detect_bonus_hunters(ds, ratio_min=ratio, min_sells=sells)
        self.ties_ = ties
        self.findings_ = infer_cross_layer_links(
            ds,
            ties=ties,
            hunters=hunters,
            scenarios=scenarios,
            ratio_min=ratio,
            min_sells=sells,
            registration_floor_wei=check_positive_int("registration_floor_wei", self.registration_floor_wei, 0),
        )
        return self


class TieClassifier(TransformerMixin, BaseEstimator):
    """``fit`` accepts a dataset or an iterable of ``(holder, held)`` pairs."""

    def __init__(self, max_hops=2):
        self.max_hops = max_hops

    def _classify(self, X):
        hops = check_positive_int("max_hops", self.max_hops, 2)
        try:
            holds = holding_relation(check_dataset(X))
        except ParameterError:
            holds = list(X)
        return classify_ties(holds, hops)

    def fit(self, X, y=None):
        self.report_ = self._classify(X)
        return self

    def transform(self, X):
        return self._classify(X)

    def fit_transform(self, X, y=None):
        return self.fit(X).report_


class EntropySeriesTransformer(TransformerMixin, BaseEstimator):
    """``transform`` returns an array with one row per bucket:
    ``h_before, h_after, loss, cumulative_loss, new_users``."""

    def __init__(self, mode="weak", bucket_seconds=TWO_DAYS, nodes="pre", edge_filter=None):
        self.mode = mode
        self.bucket_seconds = bucket_seconds
        self.nodes = nodes
        self.edge_filter = edge_filter

    def _series(self, X):
        return entropy_series(
            check_dataset(X),
            mode=check_mode(self.mode),
            bucket_seconds=check_positive_int("bucket_seconds", self.bucket_seconds),
            edge_filter=self.edge_filter,
            nodes=self.nodes,
        )

    def fit(self, X, y=None):
        self.series_ = self._series(X)
        return self

    def transform(self, X):
        return self._as_array(self._series(X))

    def fit_transform(self, X, y=None):
        return self._as_array(self.fit(X).series_)

    @staticmethod
    def _as_array(s):
        return np.array(
            [
                (p.h_before, p.h_after, p.loss, cum, p.new_users)
                for p, (_, cum) in zip(s.points, s.cumulative)
            ],
            dtype=float,
        ).reshape(-1, 5)
