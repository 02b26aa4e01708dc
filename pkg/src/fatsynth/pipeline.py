"""Pipeline stages behind the command line.

Every stage reads and writes containers under one output directory and
records a sidecar (producing command, config hash, seeds) for each file.
Items are processed one at a time and streamed to disk, so dataset size is
bounded by disk rather than memory.
"""

import csv
import io as _io
import json
import os

import numpy as np

from . import io
from .diffusion import MLPDenoiser, SAMPLERS, train_mlp_denoiser
from .latent import LatentPCA, PcaModel, decode
from .metrics import (bland_altman, bland_altman_csv, bland_altman_svg, confidence_halfwidth,
                      magnitude_features, mmd_gaussian, pairwise_diversity, pdff_mae, roi_bias)
from .phantom import BACKGROUND, RoiSet, item_seed, sample_qmaps
from .signal import (GYROMAGNETIC_MHZ_PER_T, ComplexImageSeries, FatSpectrum, QMaps,
                     add_complex_noise, forward_signal_shared_phase, pdff_map)
from .wffit import fit_image

__all__ = [
    "DataError", "ConfigMismatch", "Workspace", "protocol_variants", "STAGES",
    "generate_phantoms", "simulate", "corrupt", "fit", "train_latent", "train_diffusion",
    "sample", "evaluate", "bland_altman_report", "experiment",
]


class DataError(RuntimeError):
    """Missing, corrupt or inconsistent input data."""


class ConfigMismatch(DataError):
    """Inputs were produced under a different configuration."""


class Workspace:
    """Output directory owned by one process (``.lock`` file)."""

    def __init__(self, root, cfg, force=False):
        self.root = os.fspath(root)
        self.cfg = cfg
        self.force = force
        self.hash = io.config_hash(cfg.hash_document())
        self._lock = os.path.join(self.root, ".lock")

    def __enter__(self):
        os.makedirs(self.root, exist_ok=True)
        try:
            fd = os.open(self._lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise DataError(f"output directory {self.root} is locked by another process ({self._lock})") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()}\n")
        return self

    def __exit__(self, *exc):
        if os.path.exists(self._lock):
            os.remove(self._lock)
        return False

    def path(self, *parts):
        p = os.path.join(self.root, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    def exists(self, *parts):
        return os.path.exists(os.path.join(self.root, *parts))

    def read(self, *parts, mmap=True):
        p = os.path.join(self.root, *parts)
        if not os.path.exists(p):
            raise DataError(f"missing input {p}; run the producing stage first")
        meta = io.read_sidecar(p) if os.path.exists(io.sidecar_path(p)) else None
        if meta is None:
            raise DataError(f"input {p} has no sidecar")
        if meta.get("config_hash") != self.hash and not self.force:
            raise ConfigMismatch(
                f"{p} was produced with config {meta.get('config_hash', '?')[:12]}, "
                f"current is {self.hash[:12]} (use --force to override)")
        return io.read_array(p, mmap=mmap), meta

    def sidecar(self, path, command, seeds, **extra):
        return io.write_sidecar(path, command, self.hash, seeds, **extra)


def _write(ws, parts, arr, command, seeds, dtype=None, **extra):
    p = ws.path(*parts)
    io.write_array(p, arr, dtype=dtype)
    ws.sidecar(p, command, seeds, shape=list(np.shape(arr)), **extra)
    return p


def _stream(ws, parts, shape, dtype, items, command, seeds, **extra):
    p = ws.path(*parts)
    with io.ContainerWriter(p, shape, dtype) as w:
        for block in items:
            w.append(block)
    ws.sidecar(p, command, seeds, shape=list(shape), **extra)
    return p


def _variant_tags(cfg):
    return ["standard"] + [f"variant{i + 1}" for i in range(len(cfg.variants))]


def _protocol_for(cfg, tag):
    return cfg.protocol if tag == "standard" else cfg.variants[int(tag[len("variant"):]) - 1]


def _echo_file(tag, noisy=False):
    base = "echoes" + ("_noisy" if noisy else "")
    return f"{base}.csem" if tag == "standard" else f"{base}_{tag}.csem"


def protocol_variants(qmaps, protocols, spectrum_for):
    """Simulate the same maps under several protocols.

    ``spectrum_for`` maps a protocol to its fat spectrum. Returns one
    :class:`ComplexImageSeries` per protocol with the variant recorded in
    its metadata.
    """
    out = []
    for i, prot in enumerate(protocols):
        series = forward_signal_shared_phase(qmaps, prot, spectrum_for(prot))
        series.metadata.update(variant=i, protocol=prot.to_dict())
        out.append(series)
    return out


# -- stages ------------------------------------------------------------------

def generate_phantoms(ws):
    """Sample real-analog training and test phantoms (q-maps, labels, ROIs)."""
    cfg = ws.cfg
    h, w = cfg.phantom.grid
    for split, count, seed_key in (("phantoms", cfg.doc["dataset"]["real"], "phantom"),
                                   ("test", cfg.doc["dataset"]["test"], "test")):
        master = cfg.seeds[seed_key]
        seeds = {seed_key: master}
        outputs = {
            "qmaps": ((count, 5, h, w), np.float64,
                      {"channels": list(QMaps.CHANNELS), "pixel_size": cfg.phantom.pixel_size,
                       "phantom": cfg.phantom.to_dict()}),
            "labels": ((count, h, w), np.float32,
                       {"labels": {"background": 0, "subcutaneous_fat": 1, "muscle": 2, "liver": 3, "spleen": 4}}),
            "rois": ((count, 2, h, w), np.float32, {"rois": list(RoiSet.LABELS)}),
        }
        writers = {k: io.ContainerWriter(ws.path(split, f"{k}.csem"), shp, dt) for k, (shp, dt, _) in outputs.items()}
        try:
            for i in range(count):
                ph = sample_qmaps(cfg.phantom, item_seed(master, i))
                writers["qmaps"].append(ph.qmaps.stack()[None])
                writers["labels"].append(ph.labels[None])
                writers["rois"].append(ph.rois.stack()[None])
        except BaseException:
            for wr in writers.values():
                wr.abort()
            raise
        for k, wr in writers.items():
            wr.close()
            shp, _, extra = outputs[k]
            ws.sidecar(wr.path, "generate-phantoms", seeds, shape=list(shp), **extra)


def _check_dims(arr, expected, what):
    """``expected`` entries of ``None`` match any size."""
    shape = tuple(arr.shape)
    if len(shape) != len(expected) or any(e is not None and e != s for e, s in zip(expected, shape)):
        raise DataError(f"dimension mismatch in {what}: got {shape}, expected "
                        f"{tuple('*' if e is None else e for e in expected)}")


def _load_qmaps(ws, split):
    arr, meta = ws.read(split, "qmaps.csem")
    _check_dims(arr, (None, 5, None, None), f"{split}/qmaps.csem")
    px = meta.get("pixel_size", 1.5)
    return arr, px


def simulate(ws):
    """Simulate noiseless echoes of the test maps under every protocol."""
    cfg = ws.cfg
    for split in ("phantoms", "test"):
        arr, px = _load_qmaps(ws, split)
        tags = _variant_tags(cfg) if split == "test" else ["standard"]
        for tag in tags:
            prot = _protocol_for(cfg, tag)
            spec = _spectrum_for(cfg, prot)
            n, _, h, w = arr.shape
            _stream(ws, (split, _echo_file(tag)), (n, prot.n_echoes, h, w), np.complex64,
                    (forward_signal_shared_phase(QMaps.from_stack(np.asarray(q), px), prot, spec).echoes[None]
                     for q in arr),
                    "simulate", {}, protocol=prot.to_dict(), variant=tag, spectrum=spec.to_dict(),
                    gyromagnetic_mhz_per_t=GYROMAGNETIC_MHZ_PER_T)


def _spectrum_for(cfg, prot):
    if np.isclose(prot.field_strength, cfg.spectrum.field_strength):
        return cfg.spectrum
    if cfg.spectrum.source_ppm is None:
        raise DataError("spectrum given in Hz cannot be rescaled to another field strength")
    return FatSpectrum.from_ppm(cfg.spectrum.source_ppm, cfg.spectrum.amplitudes, prot.field_strength)


def corrupt(ws):
    """Add complex Gaussian noise to the simulated test echoes."""
    cfg = ws.cfg
    snr = cfg.snr
    master = cfg.seeds["noise"]
    for tag in _variant_tags(cfg):
        echoes, meta = ws.read("test", _echo_file(tag))
        prot = _protocol_for(cfg, tag)
        _check_dims(echoes, (None, prot.n_echoes, None, None), f"test/{_echo_file(tag)}")

        def noisy():
            for i, e in enumerate(echoes):
                s = ComplexImageSeries(np.asarray(e, dtype=np.complex128), prot)
                yield add_complex_noise(s, snr, item_seed(master, i)).echoes[None]

        _stream(ws, ("test", _echo_file(tag, noisy=True)), echoes.shape, np.complex64, noisy(),
                "corrupt", {"noise": master}, snr="inf" if np.isinf(snr) else snr, variant=tag,
                protocol=prot.to_dict())


def _fit_series_stack(ws, echoes, prot, spec, out_dir, command, seeds, px, **extra):
    n, _, h, w = echoes.shape
    results = []

    def run():
        for e in echoes:
            r = fit_image(ComplexImageSeries(np.asarray(e, dtype=np.complex128), prot), spec, ws.cfg.fit)
            results.append(r.summary())
            yield r

    qfile = ws.path(*out_dir, "qmaps.csem")
    files = {name: io.ContainerWriter(ws.path(*out_dir, f"{name}.csem"), shp, dt) for name, shp, dt in (
        ("qmaps", (n, 5, h, w), np.float64), ("pdff", (n, h, w), np.float64),
        ("residual", (n, h, w), np.float64), ("status", (n, h, w), np.float32),
        ("iterations", (n, h, w), np.float32))}
    try:
        for r in run():
            q = r.qmaps
            files["qmaps"].append(np.stack([q.rho_w, q.rho_f, q.r2star, q.field, q.phi0])[None])
            files["pdff"].append(r.pdff[None])
            files["residual"].append(r.residual[None])
            files["status"].append(r.status[None])
            files["iterations"].append(r.iterations[None])
    except BaseException:
        for f in files.values():
            f.abort()
        raise
    for name, f in files.items():
        f.close()
        ws.sidecar(f.path, command, seeds, shape=list(f.shape), protocol=prot.to_dict(), pixel_size=px, **extra)
    summary = {
        "items": len(results),
        "not_converged": sum(s["not_converged"] for s in results),
        "rank_deficient": sum(s["rank_deficient"] for s in results),
        "swap_flagged": sum(s["swap_flagged"] for s in results),
        "max_iterations": max((s["max_iterations"] for s in results), default=0),
        "per_item": results,
    }
    with open(ws.path(*out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return qfile


def fit(ws):
    """Fit the test echoes (noisy if ``corrupt`` ran) and synthetic echoes if present."""
    cfg = ws.cfg
    gt, px = _load_qmaps(ws, "test")
    n, _, h, w = gt.shape
    for tag in _variant_tags(cfg):
        name = _echo_file(tag, noisy=ws.exists("test", _echo_file(tag, noisy=True)))
        echoes, meta = ws.read("test", name)
        prot = _protocol_for(cfg, tag)
        _check_dims(echoes, (n, prot.n_echoes, h, w), f"test/{name}")
        _fit_series_stack(ws, echoes, prot, _spectrum_for(cfg, prot), ("fit", tag), "fit",
                          meta.get("seeds", {}), px, input=f"test/{name}", variant=tag)
    if ws.exists("synthetic", "echoes_noisy.csem"):
        echoes, meta = ws.read("synthetic", "echoes_noisy.csem")
        _check_dims(echoes, (None, cfg.protocol.n_echoes, None, None), "synthetic/echoes_noisy.csem")
        k = min(int(cfg.doc["dataset"]["fit_synthetic"]), echoes.shape[0])
        if k:
            syn_px = meta.get("pixel_size", px)
            _fit_series_stack(ws, echoes[:k], cfg.protocol, cfg.spectrum, ("fit", "synthetic"), "fit",
                              meta.get("seeds", {}), syn_px, input="synthetic/echoes_noisy.csem",
                              variant="synthetic")


def train_latent(ws):
    """Fit the whitening PCA latent model on the training q-maps."""
    cfg = ws.cfg
    arr, px = _load_qmaps(ws, "phantoms")
    n, c, h, w = arr.shape
    lat = cfg.doc["latent"]
    k = min(int(lat["k"]), n)
    est = LatentPCA(n_components=k, scale_channels=lat["scale_channels"])
    est.fit(np.asarray(arr).reshape(n, -1), grid=(h, w), pixel_size=px)
    m = est.model_
    seeds = {"latent": cfg.seeds["latent"]}
    extra = dict(m.metadata(), k_effective=int(m.n_components))
    for name in ("mean", "components", "stds", "channel_scale"):
        _write(ws, ("latent", f"{name}.csem"), getattr(m, name), "train-latent", seeds, dtype=np.float64, **extra)
    z = est.transform(np.asarray(arr).reshape(n, -1))
    _write(ws, ("latent", "codes.csem"), z, "train-latent", seeds, dtype=np.float64, **extra)


def _load_pca(ws):
    parts = {}
    meta = None
    for name in ("mean", "components", "stds", "channel_scale"):
        parts[name], meta = ws.read("latent", f"{name}.csem", mmap=False)
    return PcaModel(mean=parts["mean"], components=parts["components"], stds=parts["stds"],
                    channel_scale=parts["channel_scale"], grid=tuple(meta["grid"]),
                    pixel_size=meta["pixel_size"], n_requested=meta["k_requested"])


def train_diffusion(ws):
    """Train the latent denoiser on the encoded training maps."""
    cfg = ws.cfg
    z, _ = ws.read("latent", "codes.csem", mmap=False)
    d = cfg.doc["diffusion"]
    seed = cfg.seeds["diffusion"]
    net, hist = train_mlp_denoiser(z, cfg.schedule, arch=d["arch"], optimizer=d["optimizer"], seed=seed)
    extra = {"arch": net.config(), "optimizer": d["optimizer"], "schedule": cfg.schedule.metadata(),
             "steps": hist.steps}
    _write(ws, ("diffusion", "denoiser.csem"), net.get_flat(), "train-diffusion", {"diffusion": seed},
           dtype=np.float64, **extra)
    _write(ws, ("diffusion", "loss.csem"), np.asarray(hist.epoch_loss), "train-diffusion",
           {"diffusion": seed}, dtype=np.float64, **extra)


def _load_denoiser(ws):
    flat, meta = ws.read("diffusion", "denoiser.csem", mmap=False)
    a = meta["arch"]
    return MLPDenoiser.from_flat(flat, a["dim"], a["hidden"], a["n_layers"], a["time_dim"])


def sample(ws):
    """Draw synthetic q-maps, simulate them and add noise at the configured SNR."""
    cfg = ws.cfg
    pca = _load_pca(ws)
    net = _load_denoiser(ws)
    count = int(cfg.doc["dataset"]["synthetic"])
    h, w = pca.grid
    master = cfg.seeds["sample"]
    sampler = SAMPLERS[cfg.doc["diffusion"]["sampler"]]
    batch = 64

    z = np.zeros((count, pca.n_components))
    for b0 in range(0, count, batch):
        n = min(batch, count - b0)
        z[b0:b0 + n] = sampler(cfg.schedule, net, item_seed(master, b0 // batch), pca.n_components, n)

    def maps():
        return (decode(pca, zi) for zi in z)

    seeds = {"sample": master, "noise": cfg.seeds["noise"]}
    extra = {"sampler": cfg.doc["diffusion"]["sampler"], "pixel_size": pca.pixel_size,
             "channels": list(QMaps.CHANNELS)}
    _stream(ws, ("synthetic", "qmaps.csem"), (count, 5, h, w), np.float64,
            (q.stack()[None] for q in maps()), "sample", seeds, **extra)
    prot = cfg.protocol
    _stream(ws, ("synthetic", "echoes.csem"), (count, prot.n_echoes, h, w), np.complex64,
            (forward_signal_shared_phase(q, prot, cfg.spectrum).echoes[None] for q in maps()),
            "sample", seeds, protocol=prot.to_dict(), **extra)

    def noisy():
        for i, q in enumerate(maps()):
            s = forward_signal_shared_phase(q, prot, cfg.spectrum)
            yield add_complex_noise(s, cfg.snr, item_seed(cfg.seeds["noise"], i, stream=1)).echoes[None]

    _stream(ws, ("synthetic", "echoes_noisy.csem"), (count, prot.n_echoes, h, w), np.complex64,
            noisy(), "sample", seeds, protocol=prot.to_dict(),
            snr="inf" if np.isinf(cfg.snr) else cfg.snr, **extra)
    real = cfg.doc["dataset"]["real"]
    manifest = {"design": "mixed", "real_analog": {"count": real, "source": "phantoms/echoes.csem"},
                "synthetic": {"count": count, "source": "synthetic/echoes.csem"},
                "config_hash": ws.hash}
    with open(ws.path("mixed", "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


# -- evaluation --------------------------------------------------------------

def _fmt(x):
    return "nan" if x is None or not np.isfinite(x) else f"{x:.6f}"


def _nan_to_none(obj):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _method_scores(ws, tag, gt_split):
    gt, _ = ws.read(gt_split, "qmaps.csem")
    est, _ = ws.read("fit", tag, "pdff.csem")
    if est.shape[0] > gt.shape[0]:
        raise DataError(f"fit/{tag} has {est.shape[0]} items but {gt_split} only {gt.shape[0]}")
    _check_dims(est, (None,) + tuple(gt.shape[2:]), f"fit/{tag}/pdff.csem")
    labels = ws.read(gt_split, "labels.csem")[0] if ws.exists(gt_split, "labels.csem") else None
    rois = ws.read(gt_split, "rois.csem")[0] if ws.exists(gt_split, "rois.csem") else None
    mae, rhl, lhl = [], [], []
    pairs = {"RHL": ([], []), "LHL": ([], [])}
    for i in range(est.shape[0]):
        q = QMaps.from_stack(np.asarray(gt[i]))
        ref = pdff_map(q)
        e = np.asarray(est[i])
        if labels is not None:
            fg = np.asarray(labels[i]) != BACKGROUND
        else:
            total = q.rho_w + q.rho_f
            fg = total > 0.05 * total.max()
        mae.append(pdff_mae(e, ref, fg))
        if rois is not None:
            rs = RoiSet.from_stack(np.asarray(rois[i]), 1.0)
            b = roi_bias(e, ref, rs)
            rhl.append(b["RHL"])
            lhl.append(b["LHL"])
            for lab in RoiSet.LABELS:
                m = rs.masks[lab]
                pairs[lab][0].append(np.median(e[m]) * 100)
                pairs[lab][1].append(np.median(ref[m]) * 100)
    return {"mae": mae, "RHL": rhl, "LHL": lhl, "pairs": pairs}


def evaluate(ws):
    """Quantification table, per-metric rows and generative metrics."""
    cfg = ws.cfg
    group = cfg.doc["evaluation"]["slices_per_subject"]
    methods = [t for t in _variant_tags(cfg) if ws.exists("fit", t, "pdff.csem")]
    if not methods:
        raise DataError("no fit results found; run the fit stage first")
    table = _io.StringIO()
    tw = csv.writer(table, lineterminator="\n")
    tw.writerow(["method", "n", "mae", "mae_ci95", "rhl_bias", "rhl_ci95", "lhl_bias", "lhl_ci95"])
    rows = _io.StringIO()
    rw = csv.writer(rows, lineterminator="\n")
    rw.writerow(["method", "metric", "roi", "n", "value", "ci95"])
    summary = {}
    evaluated = [(t, "test") for t in methods]
    if ws.exists("fit", "synthetic", "pdff.csem"):
        evaluated.append(("synthetic", "synthetic"))
    for tag, gt_split in evaluated:
        sc = _method_scores(ws, tag, gt_split)
        n = len(sc["mae"])
        mae, mae_ci = float(np.mean(sc["mae"])), confidence_halfwidth(sc["mae"], group)
        rhl = float(np.mean(sc["RHL"])) if sc["RHL"] else float("nan")
        lhl = float(np.mean(sc["LHL"])) if sc["LHL"] else float("nan")
        rhl_ci = confidence_halfwidth(sc["RHL"], group) if sc["RHL"] else float("nan")
        lhl_ci = confidence_halfwidth(sc["LHL"], group) if sc["LHL"] else float("nan")
        tw.writerow([tag, n, _fmt(mae), _fmt(mae_ci), _fmt(rhl), _fmt(rhl_ci), _fmt(lhl), _fmt(lhl_ci)])
        rw.writerow([tag, "pdff_mae", "foreground", n, _fmt(mae), _fmt(mae_ci)])
        rw.writerow([tag, "roi_bias", "RHL", len(sc["RHL"]), _fmt(rhl), _fmt(rhl_ci)])
        rw.writerow([tag, "roi_bias", "LHL", len(sc["LHL"]), _fmt(lhl), _fmt(lhl_ci)])
        summary[tag] = {"n": n, "mae": mae, "mae_ci95": mae_ci, "rhl_bias": rhl, "lhl_bias": lhl}

    if ws.exists("synthetic", "echoes.csem"):
        gen = _generative_metrics(ws)
        for (name, roi), (n, v) in gen.items():
            rw.writerow(["generator", name, roi, n, _fmt(v), "nan"])
        summary["generator"] = {f"{k[0]}:{k[1]}": v[1] for k, v in gen.items()}

    with open(ws.path("report", "table.csv"), "w") as fh:
        fh.write("# PDFF in percentage points; ci95 = 1.96 x SD across "
                 + ("slices" if group == 1 else f"subjects of {group} slices") + "\n")
        fh.write(table.getvalue())
    with open(ws.path("report", "metrics.csv"), "w") as fh:
        fh.write(rows.getvalue())
    with open(ws.path("report", "summary.json"), "w") as fh:
        doc = {"config_hash": ws.hash, "methods": _nan_to_none(summary),
               "notes": ["FID omitted: it needs a pretrained Inception classifier; MMD and "
                         "SSIM/MS-SSIM diversity on first-echo magnitude are reported instead"]}
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _generative_metrics(ws):
    cfg = ws.cfg
    ev = cfg.doc["evaluation"]
    syn, _ = ws.read("synthetic", "echoes.csem")
    real, _ = ws.read("phantoms", "echoes.csem")
    test, _ = ws.read("test", "echoes.csem")
    m = ev["mmd_samples"]
    a = magnitude_features([np.asarray(x[0]) for x in syn[:m]])
    b = magnitude_features([np.asarray(x[0]) for x in real[:m]])
    t = magnitude_features([np.asarray(x[0]) for x in test[:m]])
    out = {}
    if syn.shape[1:] != real.shape[1:]:
        raise DataError("synthetic and real-analog images differ in shape")
    out[("mmd", "synthetic_vs_real")] = (min(len(a), len(b)), mmd_gaussian(a, b))
    out[("mmd", "test_vs_real")] = (min(len(t), len(b)), mmd_gaussian(t, b))
    seed = cfg.seeds["evaluation"]
    for name, src in (("synthetic", syn), ("real", real)):
        if src.shape[0] >= 2:
            imgs = [np.abs(np.asarray(x[0])) for x in src[:m]]
            s, ms = pairwise_diversity(imgs, ev["n_pairs"], seed)
            out[("diversity_ssim", name)] = (ev["n_pairs"], s)
            out[("diversity_ms_ssim", name)] = (ev["n_pairs"], ms)
    return out


def bland_altman_report(ws):
    """Bland-Altman statistics (est - ref) for every fitted method."""
    cfg = ws.cfg
    methods = [t for t in _variant_tags(cfg) if ws.exists("fit", t, "pdff.csem")]
    if not methods:
        raise DataError("no fit results found; run the fit stage first")
    rows = []
    for tag in methods:
        sc = _method_scores(ws, tag, "test")
        est = np.concatenate([sc["pairs"][lab][0] for lab in RoiSet.LABELS])
        ref = np.concatenate([sc["pairs"][lab][1] for lab in RoiSet.LABELS])
        st = bland_altman(est, ref)
        rows.append((tag, st))
        with open(ws.path("report", f"bland_altman_{tag}.svg"), "w") as fh:
            fh.write(bland_altman_svg(est, ref, st, title=f"Bland-Altman: {tag} (ROI median PDFF)"))
    with open(ws.path("report", "bland_altman.csv"), "w") as fh:
        fh.write(bland_altman_csv(rows))


def experiment(ws):
    """Run every stage in order."""
    for stage in ("generate-phantoms", "simulate", "corrupt", "train-latent", "train-diffusion",
                  "sample", "fit", "evaluate", "bland-altman"):
        STAGES[stage](ws)


STAGES = {
    "generate-phantoms": generate_phantoms,
    "simulate": simulate,
    "corrupt": corrupt,
    "fit": fit,
    "train-latent": train_latent,
    "train-diffusion": train_diffusion,
    "sample": sample,
    "evaluate": evaluate,
    "bland-altman": bland_altman_report,
    "experiment": experiment,
}
