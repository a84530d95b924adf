"""Feature tables: loading, saving, standardisation, session folds, toy data."""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaError, ShapeError, ValidationError

SYNTHETIC_SESSION = "synthetic"

# IEMOCAP utterance ids look like Ses01F_impro01_M012: the session is the
# "Ses01" prefix and the trailing letter gives the speaker's gender.
IEMOCAP_NAME_PATTERN = r"^(?P<session>Ses\d+)[FM]_.*_(?P<speaker>[FM])\d+$"


@dataclass
class Dataset:
    """N rows of D features, each with a class label, session id and speaker id."""

    features: np.ndarray
    labels: np.ndarray
    session_ids: np.ndarray
    speaker_ids: np.ndarray
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ShapeError("features must be an (N, D) matrix")
        n, d = self.features.shape
        self.labels = np.asarray(self.labels, dtype=str).reshape(-1)
        self.session_ids = np.asarray(self.session_ids, dtype=str).reshape(-1)
        self.speaker_ids = np.asarray(self.speaker_ids, dtype=str).reshape(-1)
        for name in ("labels", "session_ids", "speaker_ids"):
            if getattr(self, name).shape[0] != n:
                raise ShapeError(f"{name} has {getattr(self, name).shape[0]} entries, expected {n}")
        if not self.feature_names:
            self.feature_names = [f"f{j}" for j in range(d)]
        self.feature_names = [str(f) for f in self.feature_names]
        if len(self.feature_names) != d:
            raise ShapeError(f"{len(self.feature_names)} feature names for {d} columns")

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def classes(self):
        return sorted(set(self.labels.tolist()))

    @property
    def sessions(self):
        return sorted(set(self.session_ids.tolist()))

    def subset(self, index):
        index = np.asarray(index)
        return Dataset(
            self.features[index],
            self.labels[index],
            self.session_ids[index],
            self.speaker_ids[index],
            list(self.feature_names),
        )

    def with_features(self, features, names=None):
        """Same rows and metadata with a replacement feature matrix."""
        features = np.asarray(features, dtype=np.float64)
        if names is None and features.shape[1] == self.n_features:
            names = list(self.feature_names)
        return Dataset(features, self.labels, self.session_ids, self.speaker_ids, names or [])

    def concat(self, other):
        if other.n_features != self.n_features:
            raise ShapeError("cannot concatenate datasets with different feature counts")
        return Dataset(
            np.vstack([self.features, other.features]),
            np.concatenate([self.labels, other.labels]),
            np.concatenate([self.session_ids, other.session_ids]),
            np.concatenate([self.speaker_ids, other.speaker_ids]),
            list(self.feature_names),
        )

    def equals(self, other):
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.session_ids, other.session_ids)
            and np.array_equal(self.speaker_ids, other.speaker_ids)
            and self.feature_names == other.feature_names
        )


# -- CSV ---------------------------------------------------------------------


def load_csv(
    path,
    label_column="label",
    session_column="session",
    speaker_column="speaker",
    delimiter=",",
    ignore_columns=(),
):
    """Read a feature table with a header row.

    Every column that is not the label, session, speaker or an ignored
    column is parsed as a float feature, in file order. ``speaker_column``
    may be None, in which case the session id doubles as the speaker id.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file", line=1)
        for col in (label_column, session_column, speaker_column):
            if col is not None and col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        meta = {label_column, session_column, speaker_column, *ignore_columns}
        feat_cols = [j for j, h in enumerate(header) if h not in meta]
        li = header.index(label_column)
        si = header.index(session_column)
        pi = header.index(speaker_column) if speaker_column is not None else si
        rows, labels, sessions, speakers = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: expected {len(header)} cells, found {len(row)}", line=lineno
                )
            vals = []
            for j in feat_cols:
                try:
                    vals.append(float(row[j]))
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric cell {row[j]!r}", line=lineno, column=header[j]
                    )
            rows.append(vals)
            labels.append(row[li].strip())
            sessions.append(row[si].strip())
            speakers.append(row[pi].strip())
    features = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_cols))
    return Dataset(features, labels, sessions, speakers, [header[j] for j in feat_cols])


def _fmt(x):
    return format(float(x), ".17g")


def save_csv(dataset, path, delimiter=",", extra_columns=None):
    """Write ``dataset`` with 17 significant digits so floats round-trip exactly.

    ``extra_columns`` maps a column name to one string per row; such columns
    are written after the metadata and must be ignored on reload.
    """
    extra_columns = extra_columns or {}
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["label", "session", "speaker", *extra_columns, *dataset.feature_names])
        extras = [list(v) for v in extra_columns.values()]
        for i in range(len(dataset)):
            w.writerow(
                [dataset.labels[i], dataset.session_ids[i], dataset.speaker_ids[i]]
                + [col[i] for col in extras]
                + [_fmt(x) for x in dataset.features[i]]
            )


# -- ARFF --------------------------------------------------------------------


def _split_arff_header(rest):
    """Split '@attribute <name> <type>' remainder into (name, type)."""
    rest = rest.strip()
    if rest[:1] in ("'", '"'):
        q = rest[0]
        end = rest.find(q, 1)
        if end < 0:
            return None
        return rest[1:end], rest[end + 1 :].strip()
    parts = rest.split(None, 1)
    if len(parts) != 2:
        return None
    return parts[0], parts[1].strip()


def _parse_nominal(spec):
    inner = spec.strip()[1:-1]
    reader = csv.reader([inner], quotechar="'", skipinitialspace=True)
    return [v.strip() for v in next(reader)]


def load_arff(
    path,
    class_attribute=None,
    name_attribute="name",
    name_pattern=IEMOCAP_NAME_PATTERN,
    exclude=("frameTime",),
    scope_speaker=True,
):
    """Read an openSMILE-style ARFF file.

    Numeric attributes become features. The class is the nominal attribute
    called ``class_attribute``, or the last nominal attribute when that is
    None. Session and speaker ids are pulled out of the string attribute
    ``name_attribute`` with ``name_pattern``, a regex with named groups
    ``session`` and (optionally) ``speaker``. With ``scope_speaker`` the
    speaker id is the session id joined to the ``speaker`` group, otherwise
    the group alone. Without a name attribute, or when
    the pattern does not match, the relation name stands in for the session.
    """
    path = Path(path)
    attrs = []  # (name, kind, nominal values or None)
    relation = path.stem
    in_data = False
    rows = []
    with path.open() as fh:
        lines = list(fh)
    data_start = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        low = line.lower()
        if low.startswith("@relation"):
            relation = line.split(None, 1)[1].strip().strip("'\"") if " " in line else relation
        elif low.startswith("@attribute"):
            parsed = _split_arff_header(line[len("@attribute") :])
            if parsed is None:
                raise ParseError(f"{path}: malformed @attribute line", line=lineno)
            name, typ = parsed
            tl = typ.lower()
            if typ.startswith("{"):
                if not typ.endswith("}"):
                    raise ParseError(f"{path}: unterminated nominal set", line=lineno)
                attrs.append((name, "nominal", _parse_nominal(typ)))
            elif tl in ("numeric", "real", "integer"):
                attrs.append((name, "numeric", None))
            elif tl == "string" or tl.startswith("date"):
                attrs.append((name, "string", None))
            else:
                raise ParseError(f"{path}: unsupported attribute type {typ!r}", line=lineno)
        elif low.startswith("@data"):
            in_data = True
            data_start = lineno
            break
        elif line.startswith("@"):
            raise ParseError(f"{path}: unknown header directive", line=lineno)
        else:
            raise ParseError(f"{path}: unexpected content before @data", line=lineno)
    if not in_data:
        raise ParseError(f"{path}: no @data section")
    if not attrs:
        raise ParseError(f"{path}: no @attribute declarations")

    names = [a[0] for a in attrs]
    nominal = [i for i, a in enumerate(attrs) if a[1] == "nominal"]
    if class_attribute is None:
        if not nominal:
            raise SchemaError(f"{path}: no nominal class attribute")
        ci = nominal[-1]
    else:
        if class_attribute not in names:
            raise SchemaError(f"{path}: missing class attribute {class_attribute!r}")
        ci = names.index(class_attribute)
        if attrs[ci][1] != "nominal":
            raise SchemaError(f"{path}: class attribute {class_attribute!r} is not nominal")
    ni = names.index(name_attribute) if name_attribute in names else None
    feat_idx = [
        i for i, a in enumerate(attrs) if a[1] == "numeric" and a[0] not in set(exclude)
    ]
    pattern = re.compile(name_pattern) if name_pattern else None

    labels, sessions, speakers = [], [], []
    for lineno in range(data_start + 1, len(lines) + 1):
        line = lines[lineno - 1].strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("{"):
            raise ParseError(f"{path}: sparse ARFF rows are not supported", line=lineno)
        cells = next(csv.reader([line], quotechar="'", skipinitialspace=True))
        if len(cells) != len(attrs):
            raise ParseError(
                f"{path}: expected {len(attrs)} values, found {len(cells)}", line=lineno
            )
        vals = []
        for i in feat_idx:
            try:
                vals.append(float(cells[i]))
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric value {cells[i]!r}", line=lineno, column=names[i]
                )
        for i in nominal:
            if cells[i].strip() not in attrs[i][2]:
                raise ParseError(
                    f"{path}: value {cells[i]!r} not in declared set of {names[i]!r}",
                    line=lineno,
                    column=names[i],
                )
        rows.append(vals)
        labels.append(cells[ci].strip())
        session, speaker = relation, relation
        if ni is not None and pattern is not None:
            m = pattern.search(cells[ni].strip())
            if m:
                gd = m.groupdict()
                session = gd.get("session") or relation
                speaker = gd.get("speaker") or ""
                if scope_speaker or not speaker:
                    speaker = session + speaker
        sessions.append(session)
        speakers.append(speaker)
    features = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_idx))
    return Dataset(features, labels, sessions, speakers, [names[i] for i in feat_idx])


def save_arff(dataset, path, relation="features"):
    """Write ``dataset`` as ARFF with a ``name`` string attribute holding session/speaker."""
    path = Path(path)
    classes = dataset.classes
    with path.open("w") as fh:
        fh.write(f"@relation '{relation}'\n\n")
        fh.write("@attribute name string\n")
        for f in dataset.feature_names:
            fh.write(f"@attribute {f} numeric\n")
        fh.write("@attribute class {" + ",".join(classes) + "}\n\n@data\n\n")
        for i in range(len(dataset)):
            name = f"{dataset.session_ids[i]}|{dataset.speaker_ids[i]}"
            vals = ",".join(_fmt(x) for x in dataset.features[i])
            fh.write(f"'{name}',{vals},{dataset.labels[i]}\n")


# pattern matching names written by save_arff
SAVED_ARFF_NAME_PATTERN = r"^(?P<session>[^|]+)\|(?P<speaker>.*)$"


def load_saved_arff(path):
    return load_arff(
        path, class_attribute="class", name_pattern=SAVED_ARFF_NAME_PATTERN, scope_speaker=False
    )


# -- standardisation ---------------------------------------------------------


@dataclass
class Standardizer:
    mean: np.ndarray
    stddev: np.ndarray
    constant: np.ndarray

    def apply(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.mean.size:
            raise ShapeError(f"expected {self.mean.size} features, got {features.shape[-1]}")
        return (features - self.mean) / self.stddev

    def inverse(self, features):
        return np.asarray(features, dtype=np.float64) * self.stddev + self.mean

    @property
    def constant_features(self):
        return np.flatnonzero(self.constant).tolist()


def standardize_fit(features):
    """Per-feature mean and (population) standard deviation.

    Constant features get a standard deviation of 1 and are flagged in
    ``Standardizer.constant``; they map to 0 after ``apply``.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValidationError("standardize_fit needs an (N, D) matrix with N >= 2")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    scale = np.maximum(np.abs(mean), 1.0)
    constant = std <= 1e-12 * scale
    std = np.where(constant, 1.0, std)
    return Standardizer(mean, std, constant)


def standardize_apply(standardizer, features):
    return standardizer.apply(features)


# -- folds -------------------------------------------------------------------


@dataclass(frozen=True)
class Fold:
    train_sessions: tuple
    test_sessions: tuple

    def split(self, dataset):
        """Row indices ``(train, test)`` of ``dataset`` for this fold."""
        sess = dataset.session_ids
        train = np.flatnonzero(np.isin(sess, list(self.train_sessions)))
        test = np.flatnonzero(np.isin(sess, list(self.test_sessions)))
        return train, test


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)

    def __getitem__(self, i):
        return self.folds[i]

    def to_dict(self):
        return {
            "folds": [
                {"train": list(f.train_sessions), "test": list(f.test_sessions)}
                for f in self.folds
            ]
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        d = json.loads(Path(path).read_text())
        return cls(tuple(Fold(tuple(f["train"]), tuple(f["test"])) for f in d["folds"]))


def make_session_folds(sessions):
    """Leave-one-session-out plan; accepts a Dataset or a list of session ids."""
    if isinstance(sessions, Dataset):
        sessions = sessions.session_ids
    uniq = sorted(set(str(s) for s in sessions))
    if len(uniq) < 2:
        raise ValidationError(f"need at least 2 distinct sessions for folds, got {len(uniq)}")
    return FoldPlan(
        tuple(Fold(tuple(s for s in uniq if s != t), (t,)) for t in uniq)
    )


# -- toy data ----------------------------------------------------------------


def synth_blobs(
    num_classes=4,
    dim=20,
    per_class=500,
    separation=10.0,
    noise=1.0,
    seed=0,
    n_sessions=5,
):
    """Gaussian blobs around random directions scaled by ``separation``.

    Rows are shuffled and then dealt round-robin to ``n_sessions`` sessions,
    with two speakers per session, so session folds have every class.
    """
    if min(num_classes, dim, per_class, n_sessions) < 1:
        raise ValidationError("synth_blobs counts must all be positive")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((num_classes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centers = separation * dirs
    y = np.repeat(np.arange(num_classes), per_class)
    x = centers[y] + noise * rng.standard_normal((y.size, dim))
    order = rng.permutation(y.size)
    x, y = x[order], y[order]
    sess_idx = np.arange(y.size) % n_sessions
    sessions = np.array([f"s{k + 1}" for k in sess_idx])
    speakers = np.array(
        [f"s{k + 1}{'FM'[(i // n_sessions) % 2]}" for i, k in enumerate(sess_idx)]
    )
    labels = np.array([f"c{k}" for k in y])
    return Dataset(x, labels, sessions, speakers, [f"f{j}" for j in range(dim)])
