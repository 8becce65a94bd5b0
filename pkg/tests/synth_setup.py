"""Shared end-to-end settings for runs on synthetic crash panels."""

from crashnet.ingest import write_wide_csv
from crashnet.pipeline import RunConfig
from crashnet.synth import RegimeSpec, generate_panel

# detection tuned for the synthetic regime panels: an equal-weight index as
# reference, only the fast IMFs (mean period <= 10 days), a 15-day trailing
# smoothing of the energy and a spike threshold of median + 10 MAD
DETECTION = dict(
    reference="index",
    max_period=10.0,
    smooth_days=15,
    spike_k=10.0,
    edge_guard=0.1,
    lookahead=120,
)

CLI_DETECTION = [
    "--reference", "index", "--max-period", "10", "--smooth-days", "15",
    "--spike-k", "10", "--edge-guard", "0.1", "--lookahead", "120",
]


def synth_csv(tmp_path, seed=0, **kw):
    spec = RegimeSpec(seed=seed, **kw)
    return spec, write_wide_csv(generate_panel(spec), tmp_path / f"synth_{seed}.csv")


def synth_config(csv, out, **kw) -> RunConfig:
    opts = dict(DETECTION)
    opts.update(kw)
    return RunConfig(inputs=[str(csv)], out_dir=str(out), **opts)
