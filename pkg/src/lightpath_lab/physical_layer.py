"""Per-path Shannon capacity from per-link noise-to-signal ratios.

Link NSRs are additive along a path and the capacity at optimal launch power
is ``2 * R_s * log2(1 + 1 / sum(NSR_i))``, assuming Nyquist-rate transmission
on a fully loaded fixed grid. The per-link NSR itself is pluggable: the
default is a table loaded from a calibration file; a closed-form incoherent
GN evaluation is available with every coefficient supplied by config.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PLANCK_J_S = 6.626e-34
LIGHT_SPEED_M_S = 2.998e8


class PhysicalLayerError(ValueError):
    """Raised for invalid NSR calibration data or transmission configs."""


@dataclass(frozen=True)
class TransmissionConfig:
    """Fixed-grid transmission parameters.

    The channel width equals the symbol rate numerically (GHz vs GBd) and the
    grid must tile the total modulated bandwidth exactly.
    """

    symbol_rate_gbd: float = 100.0
    channel_width_ghz: float = 100.0
    channel_count: int = 100
    total_bandwidth_thz: float = 10.0

    def __post_init__(self) -> None:
        if not math.isclose(self.channel_width_ghz, self.symbol_rate_gbd):
            raise PhysicalLayerError(
                "channel width (GHz) must equal symbol rate (GBd) numerically"
            )
        if not math.isclose(
            self.channel_count * self.channel_width_ghz,
            self.total_bandwidth_thz * 1e3,
        ):
            raise PhysicalLayerError(
                "channel count x channel width must equal total bandwidth"
            )

    @classmethod
    def for_channel_count(
        cls, channel_count: int, symbol_rate_gbd: float = 100.0
    ) -> "TransmissionConfig":
        """Grid with the given channel count, bandwidth tiled to match."""
        return cls(
            symbol_rate_gbd=symbol_rate_gbd,
            channel_width_ghz=symbol_rate_gbd,
            channel_count=channel_count,
            total_bandwidth_thz=channel_count * symbol_rate_gbd / 1e3,
        )


class TableDrivenNsr:
    """Per-link NSR lookup backed by a calibration table."""

    def __init__(self, nsr_by_link: np.ndarray):
        arr = np.asarray(nsr_by_link, dtype=np.float64)
        if arr.ndim != 1:
            raise PhysicalLayerError("nsr table must be one value per link")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise PhysicalLayerError("every link NSR must be positive and finite")
        arr.setflags(write=False)
        self._nsr = arr

    @property
    def num_links(self) -> int:
        return len(self._nsr)

    def link_nsr(self, link_index: int) -> float:
        if not 0 <= link_index < len(self._nsr):
            raise PhysicalLayerError(f"no NSR defined for link index {link_index}")
        return float(self._nsr[link_index])

    @classmethod
    def uniform_per_km(cls, topology, per_km_nsr: float) -> "TableDrivenNsr":
        """Uniform-fiber fallback: NSR proportional to link length."""
        if per_km_nsr <= 0:
            raise PhysicalLayerError("per_km_nsr must be positive")
        return cls(np.array([per_km_nsr * l.length_km for l in topology.links]))


@dataclass(frozen=True)
class GnCoefficients:
    """Coefficient set for the closed-form incoherent GN span NSR.

    All values are supplied by configuration; nothing here is baked into the
    evaluation code. Units: attenuation dB/km, span length km, bandwidth Hz,
    symbol rate baud, dispersion s^2/m, nonlinearity 1/W/m, wavelength m.
    """

    span_length_km: float = 100.0
    attenuation_db_per_km: float = 0.2
    noise_figure_db: float = 4.5
    total_bandwidth_hz: float = 10e12
    symbol_rate_baud: float = 100e9
    dispersion_s2_per_m: float = -21.7e-27
    nonlinear_coeff_per_w_m: float = 1.2e-3
    wavelength_m: float = 1550e-9

    def span_nsr(self) -> float:
        """NSR contributed by one amplified span at optimal launch power."""
        alpha_lin = self.attenuation_db_per_km * 1e-3 / 4.343  # 1/m
        span_m = self.span_length_km * 1e3
        l_eff = (1.0 - math.exp(-alpha_lin * span_m)) / alpha_lin
        ase = (
            (math.exp(alpha_lin * span_m) - 1.0)
            * 10.0 ** (self.noise_figure_db / 10.0)
            * PLANCK_J_S
            * LIGHT_SPEED_M_S
            * self.symbol_rate_baud
            / self.wavelength_m
        )
        beta2 = abs(self.dispersion_s2_per_m)
        gamma = self.nonlinear_coeff_per_w_m
        return (
            2.0
            * ase**2
            * alpha_lin
            * gamma**2
            * l_eff**2
            * math.log(math.pi**2 * beta2 * self.total_bandwidth_hz**2 / alpha_lin)
            / (math.pi * beta2 * self.symbol_rate_baud**2)
        ) ** (1.0 / 3.0)


_SPAN_COUNT_MODES = ("floor", "ceil", "round", "fractional")


class ClosedFormGnNsr:
    """Per-link NSR from the closed-form GN span model.

    Each link carries ``span_count * span_nsr`` where the span count is either
    given explicitly per link or derived from the link length and the span
    length. Integer derivation modes are clamped to at least one span.
    """

    def __init__(
        self,
        topology,
        coefficients: GnCoefficients,
        span_count_mode: str = "floor",
        explicit_span_counts: dict[frozenset, float] | None = None,
    ):
        if span_count_mode not in _SPAN_COUNT_MODES:
            raise PhysicalLayerError(
                f"span_count_mode must be one of {_SPAN_COUNT_MODES}"
            )
        self.coefficients = coefficients
        self.span_count_mode = span_count_mode
        span = coefficients.span_nsr()
        counts = []
        for link in topology.links:
            if explicit_span_counts and link.endpoints() in explicit_span_counts:
                n = explicit_span_counts[link.endpoints()]
            else:
                ratio = link.length_km / coefficients.span_length_km
                if span_count_mode == "fractional":
                    n = ratio
                elif span_count_mode == "ceil":
                    n = max(math.ceil(ratio), 1)
                elif span_count_mode == "round":
                    n = max(round(ratio), 1)
                else:
                    n = max(math.floor(ratio), 1)
            counts.append(n)
        self._table = TableDrivenNsr(np.array(counts, dtype=np.float64) * span)

    def link_nsr(self, link_index: int) -> float:
        return self._table.link_nsr(link_index)

    def as_table(self) -> TableDrivenNsr:
        """Freeze this model into an equivalent calibration table."""
        return self._table


def load_nsr_model(source: str | Path | dict, topology):
    """Build an NSR model from a calibration file or parsed dict.

    Accepted schemas:

    - ``{"links": [{"a", "b", "nsr"}, ...]}``: explicit per-link table; every
      topology link must be covered.
    - ``{"per_km_nsr": x}``: uniform-fiber fallback.
    - ``{"closed_form_gn": {...}}``: coefficient set for
      :class:`ClosedFormGnNsr`, with optional ``span_count_mode`` and
      ``span_counts`` overrides.
    """
    if isinstance(source, dict):
        doc = source
    else:
        try:
            doc = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise PhysicalLayerError(f"cannot parse NSR file {source}: {exc}") from exc

    if "links" in doc:
        by_ends = {}
        for entry in doc["links"]:
            by_ends[frozenset((str(entry["a"]), str(entry["b"])))] = float(entry["nsr"])
        values = []
        for link in topology.links:
            if link.endpoints() not in by_ends:
                raise PhysicalLayerError(
                    f"calibration file missing NSR for link {link.a!r}-{link.b!r}"
                )
            values.append(by_ends[link.endpoints()])
        return TableDrivenNsr(np.array(values))
    if "per_km_nsr" in doc:
        return TableDrivenNsr.uniform_per_km(topology, float(doc["per_km_nsr"]))
    if "closed_form_gn" in doc:
        spec = dict(doc["closed_form_gn"])
        mode = spec.pop("span_count_mode", "floor")
        explicit = None
        if "span_counts" in spec:
            explicit = {
                frozenset((str(e["a"]), str(e["b"]))): float(e["span_count"])
                for e in spec.pop("span_counts")
            }
        try:
            coeffs = GnCoefficients(**spec)
        except TypeError as exc:
            raise PhysicalLayerError(f"unknown closed_form_gn coefficient: {exc}") from exc
        return ClosedFormGnNsr(
            topology, coeffs, span_count_mode=mode, explicit_span_counts=explicit
        )
    raise PhysicalLayerError(
        "NSR file must define 'links', 'per_km_nsr' or 'closed_form_gn'"
    )


def path_capacity(path, nsr_model, config: TransmissionConfig | None = None) -> float:
    """Shannon capacity of a path in Gbps: ``2 R_s log2(1 + 1/sum NSR_i)``.

    Deterministic and strictly positive; the NSR sum runs over the path's
    links, so any extension of the path can only lower the capacity.
    """
    if config is None:
        config = TransmissionConfig()
    links = path.link_seq if hasattr(path, "link_seq") else tuple(path)
    if len(links) == 0:
        raise ValueError("path has no links")
    total_nsr = sum(nsr_model.link_nsr(int(l)) for l in links)
    return 2.0 * config.symbol_rate_gbd * math.log2(1.0 + 1.0 / total_nsr)


def max_services(capacity_gbps: float, request_size_gbps: float) -> int:
    """Number of fixed-size services a lightpath of this capacity can carry."""
    if request_size_gbps <= 0:
        raise ValueError("request size must be positive")
    return int(math.floor(capacity_gbps / request_size_gbps))
