"""Command-line workflows tying data, training, design, and checks together.

Datasets on disk are a directory of CA-only PDB files plus
``sequences.fasta``, ``motifs.csv`` (``id,positions`` with ';'-joined
indices), and optionally ``splits.csv``.  Every command draws its
randomness from ``--seed`` through named substreams, and every output
file is written atomically.
"""

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from . import autodiff as ad
from . import bound as bd
from . import data as dt
from . import egnn as eg
from . import metrics as mx
from . import pipeline as pl
from . import seqmodel as sm
from .errors import ConfigError, DataError, GeoproError
from .geometry import apply_rigid, random_rigid

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SUITE = 3

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Parser whose usage failures map to exit code 1."""

    def error(self, message):
        raise _UsageError("%s: %s" % (self.prog, message))


# ---------------------------------------------------------------------------
# small file helpers


def _read_text(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise DataError("cannot read %s: %s" % (path, exc)) from None


def _write_text_atomic(path, text):
    tmp = "%s.tmp.%d" % (path, os.getpid())
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(text)
    os.replace(tmp, path)


def _format_positions(positions):
    return ";".join(str(int(p)) for p in positions)


def _parse_positions(text):
    try:
        return [int(tok) for tok in text.split(";") if tok.strip() != ""]
    except ValueError:
        raise DataError("bad position list %r" % text) from None


def parse_positions_file(text):
    """Motif positions, one per line; '#' starts a comment."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise DataError("line %d: %r is not a position" % (lineno, raw)) from None
    return out


# ---------------------------------------------------------------------------
# dataset directory layout


def write_dataset(out_dir, examples, splits=None):
    """Write (record, motif) pairs as PDB + FASTA + motif table files."""
    os.makedirs(out_dir, exist_ok=True)
    fasta = []
    motif_rows = ["id,positions"]
    for record, motif in examples:
        _write_text_atomic(
            os.path.join(out_dir, "%s.pdb" % record.record_id), dt.emit_pdb_ca(record)
        )
        fasta.append(">%s\n%s" % (record.record_id, record.residue_string))
        motif_rows.append(
            "%s,%s" % (record.record_id, _format_positions(motif.positions))
        )
    _write_text_atomic(os.path.join(out_dir, "sequences.fasta"), "\n".join(fasta) + "\n")
    _write_text_atomic(os.path.join(out_dir, "motifs.csv"), "\n".join(motif_rows) + "\n")
    if splits is not None:
        train, valid, test = splits
        _write_text_atomic(
            os.path.join(out_dir, "splits.csv"),
            dt.format_split_manifest(train, valid, test),
        )


def read_dataset(dir_path, motif_positions=None):
    """Load a dataset directory back into (record, motif) pairs by id.

    ``motif_positions`` substitutes one shared position list when the
    directory has no motif table.
    """
    fasta_path = os.path.join(dir_path, "sequences.fasta")
    pairs = dt.parse_fasta(_read_text(fasta_path))
    motif_map = {}
    motif_path = os.path.join(dir_path, "motifs.csv")
    if os.path.exists(motif_path):
        lines = _read_text(motif_path).splitlines()
        if not lines or lines[0].strip() != "id,positions":
            raise DataError("%s must start with an 'id,positions' header" % motif_path)
        for line in lines[1:]:
            if not line.strip():
                continue
            rec_id, _, tail = line.partition(",")
            motif_map[rec_id] = _parse_positions(tail)
    examples = {}
    for rec_id, letters in pairs:
        record = dt.parse_pdb_ca(
            _read_text(os.path.join(dir_path, "%s.pdb" % rec_id)),
            chain="A",
            record_id=rec_id,
        )
        if record.residue_string != letters:
            raise DataError(
                "sequence mismatch for %r between FASTA and PDB" % rec_id
            )
        if rec_id in motif_map:
            positions = motif_map[rec_id]
        elif motif_positions is not None:
            positions = motif_positions
        else:
            raise DataError(
                "no motif for %r: add motifs.csv or pass --motif-file" % rec_id
            )
        examples[rec_id] = (record, pl.motif_from_record(record, positions))
    splits = None
    split_path = os.path.join(dir_path, "splits.csv")
    if os.path.exists(split_path):
        splits = dt.parse_split_manifest(_read_text(split_path))
    return examples, splits


def _split_examples(examples, splits):
    if splits is None:
        return list(examples.values()), []
    train, valid = [], []
    for rec_id, example in sorted(examples.items()):
        side = splits.get(rec_id, "train")
        if side == "valid":
            valid.append(example)
        elif side == "train":
            train.append(example)
    return train, valid


# ---------------------------------------------------------------------------
# model plumbing


def _config_from_args(args, require_file=False, sidecar=None):
    file_text = None
    if getattr(args, "config", None):
        file_text = _read_text(args.config)
    elif sidecar and os.path.exists(sidecar):
        file_text = _read_text(sidecar)
    elif require_file:
        raise ConfigError(
            "no config available: pass --config or keep the checkpoint's "
            "sidecar file"
        )
    overrides = {}
    for flag, key in (
        ("seed", "seed"), ("alpha", "alpha"), ("beta", "beta"),
        ("topk", "top_k"), ("radius", "radius"),
        ("feature_select", "feature_select"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return pl.build_config(
        file_text=file_text, overrides=overrides,
        profile=getattr(args, "profile", None),
    )


def _load_model(args):
    sidecar = "%s.config" % args.checkpoint
    config = _config_from_args(args, require_file=True, sidecar=sidecar)
    model = pl.build_model(config)
    pl.load_checkpoint(args.checkpoint, model)
    return model


# ---------------------------------------------------------------------------
# subcommands


def _cmd_prepare(args):
    allowed = sorted(dt.parse_allow_list(_read_text(args.allow_list)))
    records = []
    for rec_id in allowed:
        text = _read_text(os.path.join(args.pdb_dir, "%s.pdb" % rec_id))
        records.append(dt.parse_pdb_ca(text, chain=args.chain, record_id=rec_id))
    train, valid, test = dt.filter_and_split(records, args.min_len, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    fasta = []
    for record in train + valid + test:
        _write_text_atomic(
            os.path.join(args.out, "%s.pdb" % record.record_id),
            dt.emit_pdb_ca(record),
        )
        fasta.append(">%s\n%s" % (record.record_id, record.residue_string))
    _write_text_atomic(
        os.path.join(args.out, "sequences.fasta"), "\n".join(fasta) + "\n"
    )
    _write_text_atomic(
        os.path.join(args.out, "splits.csv"),
        dt.format_split_manifest(train, valid, test),
    )
    print(
        "prepared %d records (%d train / %d valid / %d test) into %s"
        % (len(fasta), len(train), len(valid), len(test), args.out)
    )
    return EXIT_OK


def _cmd_motif(args):
    aln = dt.parse_alignment(_read_text(args.alignment), args.reference)
    positions = dt.extract_motif(aln, args.conservation)
    body = "".join("%d\n" % p for p in positions)
    _write_text_atomic(args.out, body)
    print("%d conserved positions -> %s" % (len(positions), args.out))
    return EXIT_OK


def _cmd_synth(args):
    examples = pl.generate_synthetic_dataset(
        args.n, args.length, args.motif_frac, seed=args.seed
    )
    write_dataset(args.out, examples)
    print("wrote %d synthetic chains of length %d to %s"
          % (args.n, args.length, args.out))
    return EXIT_OK


def _cmd_train(args):
    config = _config_from_args(args)
    motif_positions = (
        parse_positions_file(_read_text(args.motif_file)) if args.motif_file else None
    )
    examples, splits = read_dataset(args.data, motif_positions)
    train_set, valid_set = _split_examples(examples, splits)
    model = pl.build_model(config)
    history = pl.train(
        train_set, config, model,
        valid_set=valid_set or None,
        checkpoint_path=args.out if valid_set else None,
    )
    if not valid_set:
        pl.save_checkpoint(args.out, model)
    _write_text_atomic("%s.config" % args.out, pl.format_config(config))
    curve_path = args.curve or "%s.curve.csv" % args.out
    rows = ["epoch,train_total,train_backbone,train_sequence,valid_total"]
    for h in history:
        valid_cell = "" if math.isnan(h.valid_total) else "%.10g" % h.valid_total
        rows.append("%d,%.10g,%.10g,%.10g,%s" % (
            h.epoch, h.train_total, h.train_backbone, h.train_sequence, valid_cell,
        ))
    _write_text_atomic(curve_path, "\n".join(rows) + "\n")
    if history:
        print("trained %d epochs; final train loss %.6g; checkpoint %s"
              % (len(history), history[-1].train_total, args.out))
    else:
        print("no training steps requested; checkpoint %s" % args.out)
    return EXIT_OK


def _cmd_design(args):
    model = _load_model(args)
    examples, _ = read_dataset(args.data)
    if args.record_id not in examples:
        raise DataError("record %r not in %s" % (args.record_id, args.data))
    record, motif = examples[args.record_id]
    length = args.length if args.length is not None else record.length
    candidates = pl.design(
        motif, length, args.n, model.config.top_k, model,
        seed=model.config.seed, pin_motif=args.pin_motif,
    )
    os.makedirs(args.out, exist_ok=True)
    fasta = []
    for index, cand in enumerate(candidates):
        cand_id = "cand%03d" % index
        fasta.append(">%s seed=%d p=%.4f\n%s" % (
            cand_id, cand.seed, float(cand.token_probs.mean()),
            sm.decode_sequence(cand.sequence),
        ))
        cand_record = dt.ProteinRecord(cand_id, cand.sequence, cand.coords)
        _write_text_atomic(
            os.path.join(args.out, "%s.pdb" % cand_id), dt.emit_pdb_ca(cand_record)
        )
    _write_text_atomic(
        os.path.join(args.out, "candidates.fasta"), "\n".join(fasta) + "\n"
    )
    print("wrote %d candidates for %s to %s" % (args.n, args.record_id, args.out))
    return EXIT_OK


def _cmd_eval(args):
    examples, _ = read_dataset(args.data)
    if args.record_id not in examples:
        raise DataError("record %r not in %s" % (args.record_id, args.data))
    record, motif = examples[args.record_id]
    pairs = dt.parse_fasta(
        _read_text(os.path.join(args.candidates, "candidates.fasta"))
    )
    candidates = []
    for cand_id, letters in pairs:
        cand_id = cand_id.split()[0]
        coords = dt.parse_pdb_ca(
            _read_text(os.path.join(args.candidates, "%s.pdb" % cand_id)),
            chain="A", record_id=cand_id,
        ).ca_coords
        candidates.append((cand_id, pl.DesignCandidate(
            sequence=sm.encode_sequence(letters),
            coords=coords,
            token_probs=np.ones(len(letters)),
            seed=0,
            model_version="file",
        )))
    targets = {cid: record for cid, _ in candidates}
    motifs = {cid: motif for cid, _ in candidates}
    plddt_text = _read_text(args.plddt) if args.plddt else None
    report = mx.evaluate_candidates(candidates, targets, motifs, plddt_text)
    _write_text_atomic(args.out, mx.report_csv(report))
    print(mx.report_text(report), end="")
    return EXIT_OK


def _cmd_export_emb(args):
    model = _load_model(args)
    examples, _ = read_dataset(args.data)
    wanted = args.record_id or sorted(examples)
    blocks = []
    for rec_id in wanted:
        if rec_id not in examples:
            raise DataError("record %r not in %s" % (rec_id, args.data))
        record, motif = examples[rec_id]
        rng = pl.substream(model.config.seed, "export-%s" % rec_id)
        _, feats, _ = pl.forward_joint(record, motif, model, rng)
        blocks.append((rec_id, feats.data))
    _write_text_atomic(args.out, mx.export_embeddings(blocks))
    print("exported %d feature blocks to %s" % (len(blocks), args.out))
    return EXIT_OK


def _cmd_bound_demo(args):
    rng = np.random.default_rng(args.seed)
    holds = 0
    violations = 0
    worst_slack = math.inf
    for _ in range(args.instances):
        inst = bd.random_instance(rng)
        objective, upper, ok, slack = bd.verify_bound(
            inst, appendix_sign=args.appendix_sign
        )
        holds += int(ok)
        violations += int(not ok)
        worst_slack = min(worst_slack, slack)
    mode = "appendix sign" if args.appendix_sign else "statement sign"
    print("%s: inequality holds on %d/%d instances (min slack %.3e)"
          % (mode, holds, args.instances, worst_slack))
    if args.appendix_sign:
        print("violations: %d/%d" % (violations, args.instances))
    inst = bd.two_cluster_coincident_instance()
    objective, upper, ok, slack = bd.verify_bound(inst, appendix_sign=args.appendix_sign)
    print("worked case: objective %.5f, bound %.5f, holds=%s"
          % (objective, upper, ok))
    return EXIT_OK


# ---------------------------------------------------------------------------
# property суite


def _suite_equivariance(rng):
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 12))
        width = int(rng.choice([4, 8]))
        model = eg.init_egnn(rng, depth=int(rng.integers(1, 3)), feat_width=width)
        state = eg.GraphState(
            ad.Tensor(rng.normal(scale=4.0, size=(n, 3))),
            ad.Tensor(rng.normal(size=(n, width))),
        )
        worst = max(worst, eg.equivariance_check(model, state, trials=2, rng=rng))
    return worst < 1e-8, "max deviation %.3e" % worst


def _suite_invariance(rng):
    worst = 0.0
    for trial in range(10):
        examples = pl.generate_synthetic_dataset(1, int(rng.integers(6, 12)),
                                                 0.34, seed=int(rng.integers(1 << 30)))
        record, motif = examples[0]
        config = pl.TrainingConfig(
            width=8, egnn_depth=1, enc_depth=1, dec_depth=1, n_heads=2,
            seed=trial, max_len=64,
        )
        model = pl.build_model(config)
        tokens = sm.corrupt_sequence(record.sequence, motif.position_set())
        start = pl.init_backbone_coords(motif, record.length, config.radius, rng)
        transform = random_rigid(rng, reflect=bool(trial % 2))
        c1, _, lg1 = pl.forward_with_coords(tokens, start, motif.position_set(), model)
        c2, _, lg2 = pl.forward_with_coords(
            tokens, apply_rigid(transform, start), motif.position_set(), model
        )
        l1 = pl.backbone_loss(c1, record.ca_coords, motif).item()
        l2 = pl.backbone_loss(
            c2, apply_rigid(transform, record.ca_coords), motif
        ).item()
        worst = max(worst, float(np.abs(lg1.data - lg2.data).max()), abs(l1 - l2))
    return worst < 1e-8, "max deviation %.3e" % worst


def _suite_gradient(rng):
    examples = pl.generate_synthetic_dataset(1, 5, 0.4, seed=int(rng.integers(1 << 30)))
    record, motif = examples[0]
    config = pl.TrainingConfig(
        width=4, egnn_depth=1, enc_depth=1, dec_depth=1, n_heads=2,
        seed=int(rng.integers(1 << 30)), max_len=8,
    )
    model = pl.build_model(config)
    params = [t for _, t in model.named_parameters()]

    def build_loss():
        _, _, total = pl.example_losses(
            record, motif, model, np.random.default_rng(123)
        )
        return total

    with ad.Tape() as tape:
        loss = build_loss()
        tape.backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]

    worst = 0.0
    h = 1e-5
    for param, grad in zip(params, analytic):
        flat = param.data.reshape(-1)
        numeric = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = build_loss().item()
            flat[i] = orig - h
            fm = build_loss().item()
            flat[i] = orig
            numeric[i] = (fp - fm) / (2.0 * h)
        scale = max(np.abs(grad).max(initial=0.0), np.abs(numeric).max(initial=0.0),
                    1e-8)
        worst = max(worst, float(np.abs(grad.reshape(-1) - numeric).max() / scale))
    return worst < 1e-3, "worst relative error %.3e" % worst


def _suite_theorem(rng):
    worst_slack = math.inf
    for _ in range(200):
        inst = bd.random_instance(rng)
        _, _, ok, slack = bd.verify_bound(inst)
        if not ok:
            return False, "inequality violated (slack %.3e)" % slack
        worst_slack = min(worst_slack, slack)
    inst = bd.two_cluster_coincident_instance()
    objective = bd.denoising_objective(inst)
    upper = bd.upper_bound(inst)
    if abs(objective - (-0.82002)) > 1e-4 or abs(upper - (-0.75661)) > 1e-4:
        return False, "worked case off: %.5f / %.5f" % (objective, upper)
    return True, "200 instances hold (min slack %.3e)" % worst_slack


def _cmd_check(args):
    rng = np.random.default_rng(args.seed)
    suites = (
        ("equivariance", _suite_equivariance),
        ("gradient", _suite_gradient),
        ("invariance", _suite_invariance),
        ("theorem", _suite_theorem),
    )
    failed = False
    for name, suite in suites:
        ok, detail = suite(rng)
        print("%s %s (%s)" % ("PASS" if ok else "FAIL", name, detail))
        failed = failed or not ok
    return EXIT_SUITE if failed else EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0,
                        help="base seed; all randomness derives from it")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap (execution is currently single-threaded)")


def _add_config_flags(parser):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--profile", choices=sorted(pl.PROFILES),
                        help="named loss-weight preset")
    parser.add_argument("--alpha", type=float, help="backbone loss weight")
    parser.add_argument("--beta", type=float, help="sequence loss weight")
    parser.add_argument("--topk", type=int, default=None,
                        help="sampling pool size (default 3)")
    parser.add_argument("--radius", type=float, default=None,
                        help="initialization sphere radius (default 3.75)")
    parser.add_argument("--feature-select", dest="feature_select",
                        choices=("as_printed", "inverted"), default=None,
                        help="decoder input selection mode")


def build_parser():
    parser = _Parser(prog="geopro", description=__doc__)
    parser.add_argument("--version", action="version",
                        version="geopro %s" % __version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("prepare", help="PDB directory + allow-list -> dataset")
    p.add_argument("--pdb-dir", required=True)
    p.add_argument("--allow-list", required=True)
    p.add_argument("--chain", default="A")
    p.add_argument("--min-len", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(handler=_cmd_prepare)

    p = sub.add_parser("motif", help="aligned FASTA + threshold -> motif positions")
    p.add_argument("--alignment", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--lambda", dest="conservation", type=float, required=True,
                   help="column conservation threshold in (0, 1]")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(handler=_cmd_motif)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--motif-frac", type=float, required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--curve", help="loss curve CSV path")
    p.add_argument("--motif-file",
                   help="shared motif positions when motifs.csv is absent")
    _add_config_flags(p)
    _add_common(p)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("design", help="sample candidates from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--record-id", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--length", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--pin-motif", action=argparse.BooleanOptionalAction,
                   default=True,
                   help="copy motif coordinates over predictions in outputs")
    _add_config_flags(p)
    _add_common(p)
    p.set_defaults(handler=_cmd_design)

    p = sub.add_parser("eval", help="score candidates against their target")
    p.add_argument("--data", required=True)
    p.add_argument("--record-id", required=True)
    p.add_argument("--candidates", required=True, help="design output directory")
    p.add_argument("--plddt", help="optional id,plddt CSV to join")
    p.add_argument("--out", required=True, help="report CSV path")
    _add_common(p)
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("check", help="run the property suites")
    _add_common(p)
    p.set_defaults(handler=_cmd_check)

    p = sub.add_parser("bound-demo", help="random-instance sweep of the bound")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--appendix-sign", action="store_true",
                   help="flip the sigmoid argument inside the bound")
    _add_common(p)
    p.set_defaults(handler=_cmd_bound_demo)

    p = sub.add_parser("export-emb", help="dump per-position features to CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--record-id", action="append", default=None,
                   help="record to export (repeatable; default: all)")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    _add_common(p)
    p.set_defaults(handler=_cmd_export_emb)

    return parser


def _configure_logging():
    raw = os.environ.get("GEOPRO_LOG", "warn").lower()
    level = _LOG_LEVELS.get(raw)
    if level is None:
        print("unknown GEOPRO_LOG value %r; using 'warn'" % raw, file=sys.stderr)
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def run(argv):
    """Dispatch one command line; returns the process exit code."""
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        print("run 'geopro --help' for usage", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads is not None and args.threads < 1:
        print("--threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.handler(args)
    except GeoproError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
