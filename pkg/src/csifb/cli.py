"""Command-line front end: dataset, train kmeans|ae, kpi, per.

Exit codes: 0 success, 2 configuration error, 3 missing artifact,
4 ordering-check failure. Command-line flags override values from the
``--config`` JSON document.
"""
import argparse
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import kpi, linksim
from .autoenc import (AeCodec, AeScheme, build_ae_samples, model_sharing_bits,
                      ptq_quantize, train_autoencoder)
from .channel import ChannelProfile
from .errors import ConfigurationError, CsifbError, FormatError, TrainingError
from .givens import LegacyCodec, PerfectCodec
from .kmeans import (KmeansCodec, KmeansScheme, build_training_vectors, compress_codebook,
                     decompress_codebook, train_codebook)
from .store import (generate_dataset, read_codebook, read_dataset, read_model,
                    write_codebook, write_compressed_codebook, write_dataset, write_model)

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_CHECK = 0, 2, 3, 4


def _obj(props):
    return {"type": "object", "additionalProperties": False, "properties": props}


_INT = {"type": "integer", "minimum": 0}
_POS = {"type": "integer", "minimum": 1}
_NUM = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = _obj({
    "seed": _INT,
    "channel": _obj({"n_tx": _POS, "n_rx": _POS, "n_taps": _POS,
                     "tap_spacing": _NUM, "rms_delay_spread": _NUM}),
    "dataset": _obj({"n_soundings": _POS, "n_sc": _POS, "n_fft": _POS, "n_c": _POS}),
    "kmeans": _obj({"scheme": {"enum": ["joint", "split", "steering"]},
                    "n_bf": _POS, "n_b": _POS, "max_iter": _POS, "tol": {"type": "number"}}),
    "ae": _obj({"scheme": {"enum": ["qseries", "angle"]}, "n_l": _POS, "n_l_phi": _POS,
                "n_l_psi": _POS, "n_q": {"enum": [16, 32]}, "n_b": _POS, "hidden": _POS,
                "epochs": _POS, "learning_rate": _NUM, "batch": _POS, "ptq": _POS}),
    "sim": _obj({"n_rx": _POS, "payload_bits": _POS, "snr": {"type": "string"},
                 "snr_grid_db": {"type": "array", "items": {"type": "number"}},
                 "trials": _POS, "batch": _POS, "threads": _POS}),
    "outputs": _obj({"dataset": {"type": "string"}, "codebook": {"type": "string"},
                     "model": {"type": "string"}, "kpi": {"type": "string"},
                     "per": {"type": "string"}}),
})


class MissingArtifact(CsifbError):
    pass


def load_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file {path} not found")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config error at {where}: {exc.message}") from None
    return cfg


def _pick(flag, section, key, default=None):
    if flag is not None:
        return flag
    return section.get(key, default)


def _profile(cfg, n_rx=None):
    c = dict(cfg.get("channel", {}))
    if n_rx is not None:
        c.setdefault("n_rx", n_rx)
    return ChannelProfile(**c)


def _out_path(args, cfg, key, default=None):
    path = args.out or cfg.get("outputs", {}).get(key) or default
    if path is None:
        raise ConfigurationError("no output path given (--out)")
    return path


def _emit(text, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _require(path, what):
    if path is None or not Path(path).exists():
        raise MissingArtifact(f"missing {what}: {path}")
    return path


# ---------------------------------------------------------------- commands

def cmd_dataset(args, cfg):
    ds = cfg.get("dataset", {})
    seed = _pick(args.seed, cfg, "seed", 0)
    n_snd = _pick(args.soundings, ds, "n_soundings", 1000)
    d = generate_dataset(_profile(cfg), n_snd, ds.get("n_sc", 64), seed=seed,
                         n_c=ds.get("n_c", 2), n_fft=ds.get("n_fft", 256))
    out = _out_path(args, cfg, "dataset")
    write_dataset(d, out)
    print(f"dataset {out}: {d.n_soundings} soundings x {d.n_sc} subcarriers, "
          f"Q {d.n_r}x{d.n_c}, seed {d.seed}")
    return EXIT_OK


def _dataset_arg(args, cfg):
    path = args.dataset or cfg.get("outputs", {}).get("dataset")
    return read_dataset(_require(path, "dataset"))


def cmd_train_kmeans(args, cfg):
    kc = cfg.get("kmeans", {})
    scheme = KmeansScheme.parse(_pick(args.scheme, kc, "scheme", "joint"))
    n_bf = _pick(args.nbf, kc, "n_bf", 10)
    n_b = _pick(args.nb, kc, "n_b", 4)
    d = _dataset_arg(args, cfg)
    vecs = build_training_vectors(d.q.astype(np.complex128), scheme)
    cb = train_codebook(vecs, n_bf, max_iter=_pick(args.max_iter, kc, "max_iter", 100),
                        tol=kc.get("tol", 1e-6), seed=_pick(args.seed, cfg, "seed", 0),
                        scheme=scheme, n_r=d.n_r, n_c=d.n_c)
    out = _out_path(args, cfg, "codebook")
    write_codebook(cb, out)
    ccb = compress_codebook(cb, n_b)
    write_compressed_codebook(ccb, out + ".cscc")
    print(f"codebook {out}: scheme {scheme.short}, N_k={cb.n_k}, M={cb.m}, "
          f"{len(cb.wcss_history) - 1} iterations, final WCSS {cb.wcss_history[-1]:.6g}")
    print(f"model sharing bits: {ccb.n_bits}")
    return EXIT_OK


def cmd_train_ae(args, cfg):
    ac = cfg.get("ae", {})
    scheme = AeScheme(_pick(args.scheme, ac, "scheme", "qseries"),
                      n_q=_pick(args.nq, ac, "n_q", 16), n_b=_pick(args.nb, ac, "n_b", 4))
    d = _dataset_arg(args, cfg)
    train_kw = {"epochs": _pick(args.epochs, ac, "epochs", 200),
                "learning_rate": ac.get("learning_rate", 1e-3),
                "batch": ac.get("batch", 64), "seed": _pick(args.seed, cfg, "seed", 0)}
    out = _out_path(args, cfg, "model")
    ptq = _pick(args.ptq, ac, "ptq")
    samples = build_ae_samples(d.q.astype(np.complex128), scheme)
    if scheme.variant.name == "Q_ELEMENT_SERIES":
        n_l = _pick(args.nl, ac, "n_l", 6)
        sizes = (d.n_sc, ac.get("hidden", kpi.QSERIES_HIDDEN), n_l)
        res = {"": train_autoencoder(samples, encoder_sizes=sizes, **train_kw)}
    else:
        hid = ac.get("hidden", kpi.ANGLE_HIDDEN)
        res = {}
        for part, n_l in (("phi", _pick(args.nl_phi, ac, "n_l_phi", 32)),
                          ("psi", _pick(args.nl_psi, ac, "n_l_psi", 16))):
            res[part] = train_autoencoder(samples[part], encoder_sizes=(d.n_sc, hid, n_l),
                                          encoder_output="tanh", **train_kw)
    encoders = []
    for part, r in res.items():
        stem = f"{out}.{part}" if part else out
        write_model(r.encoder, stem + ".enc.csnn")
        write_model(r.decoder, stem + ".dec.csnn")
        encoders.append(r.encoder)
        print(f"model {stem}: final training MSE {r.loss_history[-1]:.6g}")
    full = model_sharing_bits(encoders)
    print(f"model sharing bits: {full}")
    if ptq:
        qms = [ptq_quantize(e, ptq) for e in encoders]
        for (part, _), qm in zip(res.items(), qms):
            stem = f"{out}.{part}" if part else out
            write_model(qm, stem + f".enc.ptq{ptq}.csnn")
        reduced = model_sharing_bits(qms)
        print(f"model sharing bits with {ptq}-bit PTQ: {reduced} "
              f"({100.0 * (1 - reduced / full):.1f}% reduction)")
    return EXIT_OK


def _load_ae(prefix, n_q, n_b):
    """Autoencoder codec from files written by ``train ae`` under ``prefix``."""
    if Path(prefix + ".enc.csnn").exists():
        enc = read_model(prefix + ".enc.csnn")
        dec = read_model(_require(prefix + ".dec.csnn", "decoder"))
        return AeCodec(AeScheme("qseries", n_q=n_q), enc, dec)
    parts = {}
    for p in ("phi", "psi"):
        parts[p] = (read_model(_require(f"{prefix}.{p}.enc.csnn", "encoder")),
                    read_model(_require(f"{prefix}.{p}.dec.csnn", "decoder")))
    return AeCodec(AeScheme("angle", n_b=n_b), (parts["phi"][0], parts["psi"][0]),
                   (parts["phi"][1], parts["psi"][1]))


def _load_kmeans(path, n_b):
    cb = read_codebook(_require(path, "codebook"))
    return KmeansCodec(decompress_codebook(compress_codebook(cb, n_b)))


def _nmse_on(codec, q):
    qh = np.stack([codec.decode(codec.encode(qi)) for qi in q])
    return kpi.reconstruction_nmse(q, qh)


def cmd_kpi(args, cfg):
    reports = []
    q = None
    if args.dataset:
        q = read_dataset(_require(args.dataset, "dataset")).q.astype(np.complex128)
        q = q[:args.nmse_soundings]
    schemes = set(args.schemes.split(",")) if args.schemes else {"legacy", "kmeans", "ae"}
    for c in kpi.overhead_configs():
        if c["scheme"] in schemes:
            nmse = _nmse_on(LegacyCodec(c["n_b"]), q) if q is not None and c["scheme"] == "legacy" else None
            reports.append(kpi.report(c, nmse))
    failures = []
    for path in args.codebook or []:
        try:
            codec = _load_kmeans(path, args.nb)
            cb = codec.codebook
            r = kpi.report({"scheme": "kmeans", "variant": cb.scheme.short, "n_bf": cb.n_bf,
                            "n_b": args.nb, "n_r": cb.n_r, "n_c": cb.n_c},
                           None if q is None else _nmse_on(codec, q))
            reports.append(r)
        except (MissingArtifact, FormatError) as exc:
            failures.append(f"codebook {path}: {exc}")
    for prefix in args.ae or []:
        try:
            codec = _load_ae(prefix, args.nq, args.nb)
            if codec.scheme.variant.name == "Q_ELEMENT_SERIES":
                params = {"scheme": "ae", "variant": "qseries", "n_q": args.nq,
                          "encoder_sizes": codec.encoders.layer_sizes}
            else:
                params = {"scheme": "ae", "variant": "angle", "n_b": args.nb,
                          "phi_sizes": codec.encoders[0].layer_sizes,
                          "psi_sizes": codec.encoders[1].layer_sizes}
            r = kpi.report(params, None if q is None else _nmse_on(codec, q))
            reports.append(r)
        except (MissingArtifact, FormatError) as exc:
            failures.append(f"model {prefix}: {exc}")
    text = kpi.to_markdown(reports) if args.format == "md" else kpi.to_csv(reports)
    _emit(text, args.out or cfg.get("outputs", {}).get("kpi"))
    for f in failures:
        print(f"error: {f}", file=sys.stderr)
    return EXIT_MISSING if failures else EXIT_OK


def parse_snr(text):
    """``start:step:stop`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            start, step, stop = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(round((stop - start) / step)) + 1
            return [start + i * step for i in range(n)]
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigurationError(f"bad SNR grid {text!r}") from None


def build_codecs(args):
    """Named codecs for the ``per`` command."""
    codecs = []
    for name in (args.schemes.split(",") if args.schemes else []):
        name = name.strip()
        if name == "perfect":
            codecs.append(("perfect", "", "", PerfectCodec()))
        elif name.startswith("legacy"):
            n_b = int(name[6:] or 4)
            codecs.append(("legacy", "", f"n_b={n_b}", LegacyCodec(n_b)))
        elif name:
            raise ConfigurationError(f"unknown scheme {name!r} (use perfect, legacy2, legacy4; "
                                     "trained schemes via --codebook/--ae)")
    for path in args.codebook or []:
        c = _load_kmeans(path, args.nb)
        codecs.append(("kmeans", c.codebook.scheme.short, f"n_bf={c.codebook.n_bf}", c))
    for prefix in args.ae or []:
        c = _load_ae(prefix, args.nq, args.nb)
        if c.scheme.variant.name == "Q_ELEMENT_SERIES":
            codecs.append(("ae", "qseries", f"n_l={c.encoders.layer_sizes[-1]};n_q={args.nq}", c))
        else:
            codecs.append(("ae", "angle", f"n_l_phi={c.encoders[0].layer_sizes[-1]};"
                           f"n_l_psi={c.encoders[1].layer_sizes[-1]};n_b={args.nb}", c))
    if not codecs:
        raise ConfigurationError("no schemes selected")
    return codecs


def _greater(a, b):
    # trials share seeds across schemes, so use the paired test when possible
    if a.failures is not None and b.failures is not None:
        return linksim.paired_greater(a, b)[0]
    return linksim.significantly_greater(a, b)


def check_ordering(results):
    """Ordering checks at the SNR where legacy n_b=4 PER is in [0.05, 0.2].

    ``results`` maps (scheme, variant, params) to a list of PerPoint.
    Returns a list of (description, passed) pairs.
    """
    def find(scheme, variant=None, pred=lambda p: True):
        return [(k, v) for k, v in results.items()
                if k[0] == scheme and (variant is None or k[1] == variant) and pred(k[2])]

    legacy4 = find("legacy", pred=lambda p: p == "n_b=4")
    if not legacy4:
        raise ConfigurationError("ordering check needs legacy4 among the schemes")
    curve = legacy4[0][1]
    idx = [i for i, p in enumerate(curve) if 0.05 <= p.per <= 0.2]
    if not idx:
        return [("legacy n_b=4 PER within [0.05, 0.2] at some SNR point", False)]
    i = min(idx, key=lambda j: abs(curve[j].per - 0.1))
    ref = curve[i]
    out = [(f"operating SNR {ref.snr_db:g} dB (legacy n_b=4 PER {ref.per:.3f})", True)]
    for key, pts in results.items():
        if key[0] in ("kmeans", "ae"):
            out.append((f"{key[0]}-{key[1]}({key[2]}) PER {pts[i].per:.3f} >= legacy "
                        f"{ref.per:.3f} (one-sided 95%)", _greater(pts[i], ref)))
    for (k1, c1) in find("kmeans", "joint"):
        for (k3, c3) in find("kmeans", "steering", lambda p, k1=k1: p == k1[2]):
            out.append((f"kmeans steering PER {c3[i].per:.3f} <= joint {c1[i].per:.3f} ({k1[2]})",
                        linksim.not_less(c1[i], c3[i])))
    for (kq, cq) in find("ae", "qseries"):
        for (ka, ca) in find("ae", "angle"):
            out.append((f"ae qseries PER {cq[i].per:.3f} <= ae angle {ca[i].per:.3f}",
                        linksim.not_less(ca[i], cq[i])))
    for (k2, c2) in find("legacy", pred=lambda p: p == "n_b=2"):
        out.append((f"legacy n_b=2 PER {c2[i].per:.3f} >= n_b=4 {ref.per:.3f}",
                    linksim.not_less(c2[i], ref)))
    return out


def cmd_per(args, cfg):
    sc = cfg.get("sim", {})
    snr = parse_snr(args.snr) if args.snr else (
        parse_snr(sc["snr"]) if "snr" in sc else sc.get("snr_grid_db", [0, 2, 4, 6, 8]))
    profile = _profile(cfg, n_rx=sc.get("n_rx", 2))
    sim = linksim.SimConfig(n_r=profile.n_tx, n_c=cfg.get("dataset", {}).get("n_c", 2),
                            n_rx=profile.n_rx, profile=profile,
                            payload_bits=sc.get("payload_bits", 1000), snr_grid_db=tuple(snr),
                            trials_per_point=_pick(args.trials, sc, "trials", 1000),
                            master_seed=_pick(args.seed, cfg, "seed", 0),
                            batch=sc.get("batch", 250),
                            threads=_pick(args.threads, sc, "threads", 1))
    results = {}
    rows = []
    for scheme, variant, params, codec in build_codecs(args):
        pts = linksim.per_curve(sim, codec)
        results[(scheme, variant, params)] = pts
        rows += [(scheme, variant, params, p) for p in pts]
    _emit(linksim.per_csv(rows), args.out or cfg.get("outputs", {}).get("per"))
    if args.check_ordering:
        checks = check_ordering(results)
        for desc, ok in checks:
            print(f"{'PASS' if ok else 'FAIL'} {desc}", file=sys.stderr)
        if not all(ok for _, ok in checks):
            return EXIT_CHECK
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--format", choices=["csv", "md"], default="csv")
    common.add_argument("--threads", type=int)

    p = argparse.ArgumentParser(prog="csifb", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dataset", parents=[common], help="generate a steering-matrix dataset")
    d.add_argument("--soundings", type=int)
    d.set_defaults(func=cmd_dataset)

    t = sub.add_parser("train", help="train a codebook or autoencoder")
    tsub = t.add_subparsers(dest="kind", required=True)
    tk = tsub.add_parser("kmeans", parents=[common])
    tk.add_argument("--dataset")
    tk.add_argument("--scheme", choices=["joint", "split", "steering"])
    tk.add_argument("--nbf", type=int)
    tk.add_argument("--nb", type=int)
    tk.add_argument("--max-iter", type=int)
    tk.set_defaults(func=cmd_train_kmeans)
    ta = tsub.add_parser("ae", parents=[common])
    ta.add_argument("--dataset")
    ta.add_argument("--scheme", choices=["qseries", "angle"])
    ta.add_argument("--nl", type=int)
    ta.add_argument("--nl-phi", type=int)
    ta.add_argument("--nl-psi", type=int)
    ta.add_argument("--nq", type=int, choices=[16, 32])
    ta.add_argument("--nb", type=int)
    ta.add_argument("--epochs", type=int)
    ta.add_argument("--ptq", type=int)
    ta.set_defaults(func=cmd_train_ae)

    k = sub.add_parser("kpi", parents=[common], help="overhead/complexity table")
    k.add_argument("--schemes", help="comma list of legacy,kmeans,ae (analytic rows)")
    k.add_argument("--dataset", help="dataset for NMSE columns")
    k.add_argument("--nmse-soundings", type=int, default=50)
    k.add_argument("--codebook", action="append", help="trained codebook file (repeatable)")
    k.add_argument("--ae", action="append", help="trained autoencoder prefix (repeatable)")
    k.add_argument("--nb", type=int, default=4)
    k.add_argument("--nq", type=int, default=16, choices=[16, 32])
    k.set_defaults(func=cmd_kpi)

    r = sub.add_parser("per", parents=[common], help="PER curves")
    r.add_argument("--schemes", help="comma list of perfect, legacy4, legacy2")
    r.add_argument("--codebook", action="append")
    r.add_argument("--ae", action="append")
    r.add_argument("--snr", help="start:step:stop in dB or a comma list")
    r.add_argument("--trials", type=int)
    r.add_argument("--nb", type=int, default=4)
    r.add_argument("--nq", type=int, default=16, choices=[16, 32])
    r.add_argument("--check-ordering", action="store_true")
    r.set_defaults(func=cmd_per)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
