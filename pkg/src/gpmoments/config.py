"""Experiment configuration: flat key-value files, defaults, presets.

Config files are plain text, one ``key = value`` pair per line with dotted
section prefixes (diffable and language-neutral), e.g.::

    model = exponential_overid
    n = 500
    theta_star = 2.0
    transform.kind = cdf
    eigen.alpha = 1.7
    mcmc.total = 10000

Command-line flags override file values; presets bundle the constants of
the three simulation studies.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class ExperimentConfig:
    # model / data
    model: str = "exponential_overid"
    n: int = 500
    theta_star: float = 2.0
    seed: int = 0
    m_grid: int = 1000
    data_file: str | None = None
    # theta prior (uniform box; falls back to the model's box)
    theta_lo: float | None = None
    theta_hi: float | None = None
    # dominating measure on the x side: lebesgue | exp_decay | gauss_decay
    pi_kind: str = "lebesgue"
    # transform
    transform_kind: str = "cdf"
    t_lo: float | None = None
    t_hi: float | None = None
    rho_kind: str = "lebesgue"
    regularize: str = "auto"
    # prior
    eigen_kind: str = "polynomial"
    eigen_alpha: float = 1.7
    eigen_a: float = 0.5
    eigen_sigma0: float = 1.0
    eigen_c: float = 1.0
    eigen_j: int = 300
    mean_strategy: str = "two_step"
    mean_q: float = 2.0
    mean_reg: float = 0.1
    mean_loc: float = 2.0
    mean_coeffs: tuple[float, ...] = ()
    basis_family: str = "legendre"
    # posterior
    path: str = "svd"
    convention: str = "quadrature"
    # mcmc
    mcmc_total: int = 10000
    mcmc_burn_in: int = 5000
    mcmc_proposal: str = "gaussian_rw"
    mcmc_scale: float = 0.25
    mcmc_init: float | None = None
    mcmc_seed: int | None = None
    # reporting
    kde_bandwidth: float | None = None
    out: str = "results"
    make_figures: bool = True

    def __post_init__(self):
        if self.m_grid < 100:
            raise ConfigError(f"m_grid must be at least 100, got {self.m_grid}")
        if self.n < 2:
            raise ConfigError(f"n must be at least 2, got {self.n}")
        if self.mcmc_total <= self.mcmc_burn_in or self.mcmc_burn_in < 0:
            raise ConfigError("need mcmc_total > mcmc_burn_in >= 0")

    def theta_bounds(self) -> tuple[float, float] | None:
        if self.theta_lo is None or self.theta_hi is None:
            return None
        return (self.theta_lo, self.theta_hi)


# map between dotted file keys and dataclass fields
_KEYMAP = {
    "model": "model",
    "n": "n",
    "theta_star": "theta_star",
    "seed": "seed",
    "m_grid": "m_grid",
    "data_file": "data_file",
    "out": "out",
    "make_figures": "make_figures",
    "theta_box.lo": "theta_lo",
    "theta_box.hi": "theta_hi",
    "pi.kind": "pi_kind",
    "transform.kind": "transform_kind",
    "transform.t_lo": "t_lo",
    "transform.t_hi": "t_hi",
    "transform.rho": "rho_kind",
    "transform.regularize": "regularize",
    "eigen.kind": "eigen_kind",
    "eigen.alpha": "eigen_alpha",
    "eigen.a": "eigen_a",
    "eigen.sigma0": "eigen_sigma0",
    "eigen.c": "eigen_c",
    "eigen.J": "eigen_j",
    "prior_mean.strategy": "mean_strategy",
    "prior_mean.q": "mean_q",
    "prior_mean.reg": "mean_reg",
    "prior_mean.loc": "mean_loc",
    "prior_mean.coeffs": "mean_coeffs",
    "basis.family": "basis_family",
    "posterior.path": "path",
    "posterior.convention": "convention",
    "mcmc.total": "mcmc_total",
    "mcmc.burn_in": "mcmc_burn_in",
    "mcmc.proposal": "mcmc_proposal",
    "mcmc.scale": "mcmc_scale",
    "mcmc.init": "mcmc_init",
    "mcmc.seed": "mcmc_seed",
    "kde.bandwidth": "kde_bandwidth",
}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}

_INT_FIELDS = {"n", "seed", "m_grid", "eigen_j", "mcmc_total", "mcmc_burn_in", "mcmc_seed"}
_FLOAT_FIELDS = {
    "theta_star", "theta_lo", "theta_hi", "t_lo", "t_hi", "eigen_alpha",
    "eigen_a", "eigen_sigma0", "eigen_c", "mean_q", "mean_reg", "mean_loc",
    "mcmc_scale", "mcmc_init", "kde_bandwidth",
}
_BOOL_FIELDS = {"make_figures"}


def _convert(field_name: str, raw: str):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if field_name == "mean_coeffs":
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if field_name in _INT_FIELDS:
        return int(raw)
    if field_name in _FLOAT_FIELDS:
        return float(raw)
    if field_name in _BOOL_FIELDS:
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"cannot parse boolean {raw!r} for {field_name}")
    return raw


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse flat ``key = value`` lines into a config, over a base."""
    updates = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _KEYMAP:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        field_name = _KEYMAP[key]
        updates[field_name] = _convert(field_name, raw)
    base = base or ExperimentConfig()
    return replace(base, **updates)


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(), base=base)


def config_to_text(config: ExperimentConfig) -> str:
    """Serialize a config back to the flat format (stable key order)."""
    lines = []
    reverse = {v: k for k, v in _KEYMAP.items()}
    for f in fields(config):
        key = reverse[f.name]
        value = getattr(config, f.name)
        if value is None:
            continue
        if f.name == "mean_coeffs":
            if not value:
                continue
            value = ",".join(repr(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# reproduction presets (constants of the three simulation studies)
# ---------------------------------------------------------------------------

PRESETS: dict[str, ExperimentConfig] = {
    # population mean on the real line, Laplace-transform summary, prior on
    # theta induced from the density prior, closed-form Gaussian posterior
    "exp1": ExperimentConfig(
        model="mean_gaussian", n=1000, theta_star=1.0, m_grid=1000,
        pi_kind="gauss_decay", transform_kind="mgf", rho_kind="gauss_decay",
        t_lo=-0.5, t_hi=0.5, regularize="always",
        eigen_kind="geometric", eigen_a=0.3, eigen_sigma0=1.0, eigen_j=25,
        basis_family="hermite", mean_strategy="gauss_pdf",
        path="conjugate", out="results/exp1",
    ),
    # population mean on [-1, 1], cdf summary, beta prior mean, triangular
    # proposal, uniform prior on theta
    "exp2_cdf": ExperimentConfig(
        model="mean_truncated", n=1000, theta_star=0.0, m_grid=1000,
        pi_kind="lebesgue", transform_kind="cdf", rho_kind="lebesgue",
        regularize="always",
        eigen_kind="polynomial", eigen_alpha=1.7, eigen_sigma0=5.0, eigen_j=300,
        basis_family="legendre", mean_strategy="beta", mean_q=2.0,
        path="svd", theta_lo=-1.0, theta_hi=1.0,
        mcmc_total=10000, mcmc_burn_in=5000, mcmc_proposal="triangular",
        mcmc_init=0.5, out="results/exp2_cdf",
    ),
    # same, with the moment generating function summary
    "exp2_mgf": ExperimentConfig(
        model="mean_truncated", n=1000, theta_star=0.0, m_grid=1000,
        pi_kind="lebesgue", transform_kind="mgf", rho_kind="lebesgue",
        t_lo=-3.0, t_hi=3.0, regularize="always",
        eigen_kind="polynomial", eigen_alpha=1.7, eigen_sigma0=5.0, eigen_j=300,
        basis_family="legendre", mean_strategy="beta", mean_q=2.0,
        path="svd", theta_lo=-1.0, theta_hi=1.0,
        mcmc_total=10000, mcmc_burn_in=5000, mcmc_proposal="triangular",
        mcmc_init=0.5, out="results/exp2_mgf",
    ),
    # overidentified exponential-mean study: cdf summary, exponential-decay
    # dominating measure, two-step prior mean, chi-squared proposal
    "exp3": ExperimentConfig(
        model="exponential_overid", n=500, theta_star=2.0, m_grid=1000,
        pi_kind="exp_decay", transform_kind="cdf", rho_kind="lebesgue",
        regularize="always",
        eigen_kind="polynomial", eigen_alpha=1.7, eigen_sigma0=1.0, eigen_j=300,
        basis_family="legendre", mean_strategy="two_step", mean_reg=0.1,
        path="svd", theta_lo=1.0, theta_hi=3.0,
        mcmc_total=10000, mcmc_burn_in=5000, mcmc_proposal="chi_squared_ceil",
        mcmc_init=1.0, kde_bandwidth=0.3, out="results/exp3",
    ),
}

# Monte Carlo batch over the overidentified study
MC_DEFAULT_REPS = 100


def preset(name: str) -> ExperimentConfig:
    key = "exp3" if name == "exp3_mc100" else name
    if key not in PRESETS:
        raise ConfigError(
            f"unknown experiment {name!r}; available: "
            f"{sorted(PRESETS) + ['exp3_mc100']}")
    cfg = PRESETS[key]
    if name == "exp3_mc100":
        cfg = replace(cfg, out="results/exp3_mc100")
    return cfg
