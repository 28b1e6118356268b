import csv
import io
import logging
import math
from collections import defaultdict
from typing import Any, Dict, Iterable, List, Sequence, Tuple

from config_settings import TOOL_VERSION
from constants import COMPARISON_COLUMNS, SWEEP_COLUMNS, TRACE_COLUMNS
from edge_core.errors import SchemaError
from edge_core.run_store import atomic_write_text

logger = logging.getLogger(__name__)

MEAN_SOURCES = ("scr", "T_total", "E_total", "V")

# ─────────────────────────────────────────────────────────────────────────────
# Helper: cell formatting
# ─────────────────────────────────────────────────────────────────────────────
def format_value(value: Any) -> str:
  """
  Render one CSV cell. Floats use repr so a reread gives back the exact
  double; NaN and None become empty cells.
  """
  if value is None:
    return ""
  if isinstance(value, bool):
    return "true" if value else "false"
  if isinstance(value, int):
    return str(value)
  if isinstance(value, float) or hasattr(value, "dtype"):
    v = float(value)
    if math.isnan(v):
      return ""
    return repr(v)
  return str(value)


def _meta_line(scenario_hash: str) -> str:
  return f"# scenario_hash={scenario_hash}; tool_version={TOOL_VERSION}"


def parse_meta_line(line: str) -> Dict[str, str]:
  """Split '# key=value; key=value' into a dict."""
  if not line.startswith("#"):
    raise SchemaError("$", "missing '# scenario_hash=...; tool_version=...' line")
  meta: Dict[str, str] = {}
  for part in line[1:].split(";"):
    if "=" in part:
      key, value = part.split("=", 1)
      meta[key.strip()] = value.strip()
  return meta

# ─────────────────────────────────────────────────────────────────────────────
# Writers
# ─────────────────────────────────────────────────────────────────────────────
def write_rows(path: str, columns: Sequence[str], rows: Iterable[Dict[str, Any]], scenario_hash: str) -> str:
  buf = io.StringIO()
  buf.write(_meta_line(scenario_hash) + "\n")
  writer = csv.writer(buf, lineterminator="\n")
  writer.writerow(columns)
  count = 0
  for row in rows:
    writer.writerow([format_value(row.get(c)) for c in columns])
    count += 1
  atomic_write_text(path, buf.getvalue())
  logger.info(f"💾 Wrote {count} rows to {path}")
  return path


def write_trace_csv(path: str, trace, scenario_hash: str) -> str:
  """One row per outer iteration; row 0 is the starting allocation."""
  return write_rows(path, TRACE_COLUMNS, (r.as_dict() for r in trace.rows), scenario_hash)


def comparison_row(solution) -> Dict[str, Any]:
  bd = solution.breakdown
  return {
    "algorithm": solution.algorithm,
    "scr": solution.scr,
    "T_total": bd.T_total,
    "E_total": bd.E_total,
    "V": bd.V,
  }


def write_comparison_csv(path: str, solutions: Sequence, scenario_hash: str) -> str:
  return write_rows(path, COMPARISON_COLUMNS, (comparison_row(s) for s in solutions), scenario_hash)


def attach_means(rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
  """
  Fill the *_mean columns: the average over seeds of every ok row sharing
  (algorithm, value). Groups without an ok row get empty means.
  """
  groups: Dict[Tuple[str, str], List[Dict[str, Any]]] = defaultdict(list)
  for row in rows:
    if row.get("status") == "ok":
      groups[(row["algorithm"], format_value(row["value"]))].append(row)
  for row in rows:
    members = groups.get((row["algorithm"], format_value(row["value"])), [])
    for name in MEAN_SOURCES:
      row[f"{name}_mean"] = math.fsum(float(m[name]) for m in members) / len(members) if members else None
  return rows


def write_sweep_csv(path: str, rows: List[Dict[str, Any]], scenario_hash: str) -> str:
  return write_rows(path, SWEEP_COLUMNS, attach_means(rows), scenario_hash)

# ─────────────────────────────────────────────────────────────────────────────
# Readers
# ─────────────────────────────────────────────────────────────────────────────
def read_csv(path: str) -> Tuple[Dict[str, str], List[Dict[str, str]]]:
  """
  Read a file written by write_rows. Returns the metadata line as a dict and
  the data rows keyed by column name (values left as strings).
  """
  try:
    with open(path, newline='', encoding='utf-8') as csvfile:
      first = csvfile.readline().rstrip("\n")
      meta = parse_meta_line(first)
      reader = csv.DictReader(csvfile)
      rows = [dict(r) for r in reader]
  except FileNotFoundError as e:
    raise SchemaError("$", f"file not found: {path}") from e
  logger.debug(f"🔍 Read {len(rows)} rows from {path}")
  return meta, rows


def load_sweep_rows(path: str) -> Tuple[Dict[str, str], List[Dict[str, Any]]]:
  """Sweep CSV rows with the numeric columns converted back to floats/ints."""
  meta, raw = read_csv(path)
  rows: List[Dict[str, Any]] = []
  for i, r in enumerate(raw):
    missing = [c for c in SWEEP_COLUMNS if c not in r]
    if missing:
      raise SchemaError(f"rows[{i}].{missing[0]}", "missing column")
    row: Dict[str, Any] = dict(r)
    for name in ("scr", "T_total", "E_total", "V"):
      row[name] = float(r[name]) if r[name] else None
    row["iterations"] = int(r["iterations"]) if r["iterations"] else None
    row["seed"] = int(r["seed"]) if r["seed"] else None
    for name in MEAN_SOURCES:
      row.pop(f"{name}_mean", None)
    rows.append(row)
  return meta, rows
