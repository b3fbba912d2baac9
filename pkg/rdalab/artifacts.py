"""
Result emission for rdalab experiments
All files of a run go through one writer thread, so parallel campaigns never interleave output:
- <outdir>/<experiment>/<name>.csv   floats printed with 17 significant digits
- <outdir>/<experiment>/<name>.json  sorted keys
- <outdir>/<experiment>/manifest.json
"""

import csv
import io
import json
import logging
import platform
import queue
import threading
import time
from concurrent.futures import Future
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, List, Optional, Sequence

import numpy as np
import scipy

from alarms import RDALabError

logger = logging.getLogger(__name__)

RDALAB_VERSION = "0.1.0"


def format_value(value: Any) -> str:
    """Cell text: floats with '.17g', complex as 're+imj', everything else str()"""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    if isinstance(value, (complex, np.complexfloating)):
        value = complex(value)
        return f"{value.real:.17g}{value.imag:+.17g}j"
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def plain(value: Any) -> Any:
    """numpy containers and scalars -> JSON-ready python values"""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {'re': float(np.real(value)), 'im': float(np.imag(value))}
    return value


def json_text(data: Any) -> str:
    return json.dumps(plain(data), sort_keys=True, indent=2) + '\n'


class WriterQueue:
    """
    One long-lived daemon thread drains a FIFO of write jobs, started on first use.
    submit() blocks on the job's Future, so the caller gets the return value or the exception.
    """

    def __init__(self, name: str = "rdalab-writer"):
        self.name = name
        self.jobs: queue.Queue = queue.Queue()
        self.thread: Optional[threading.Thread] = None
        self._start_lock = threading.Lock()

    def submit(self, func: Callable, *args, **kwargs) -> Any:
        future: Future = Future()
        self._ensure_writer()
        self.jobs.put((future, func, args, kwargs))
        return future.result()

    def _ensure_writer(self):
        with self._start_lock:
            if self.thread is None or not self.thread.is_alive():
                self.thread = threading.Thread(target=self._drain, name=self.name, daemon=True)
                self.thread.start()

    def _drain(self):
        while True:
            future, func, args, kwargs = self.jobs.get()
            try:
                future.set_result(func(*args, **kwargs))
            except BaseException as exc:
                logger.warning(f"⚠️ write job {getattr(func, '__name__', func)} failed: {exc}")
                future.set_exception(exc)
            finally:
                self.jobs.task_done()


writer_queue = WriterQueue()


def _write_text(path: Path, text: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding='utf-8')
    return str(path)


class ArtifactStore:
    """Output directory of one experiment run"""

    def __init__(self, outdir: str, experiment: str, fmt: str = 'both'):
        self.root = Path(outdir) / experiment
        self.experiment = experiment
        self.fmt = fmt
        self.outputs: List[str] = []

    def _emit(self, name: str, text: str) -> str:
        path = writer_queue.submit(_write_text, self.root / name, text)
        self.outputs.append(name)
        logger.debug(f"✅ wrote {path}")
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Optional[str]:
        if self.fmt == 'json':
            return None
        return self._emit(f"{name}.csv", csv_text(header, rows))

    def write_json(self, name: str, data: Any) -> Optional[str]:
        if self.fmt == 'csv':
            return None
        return self._emit(f"{name}.json", json_text(data))

    def write_manifest(self, manifest: dict) -> str:
        return writer_queue.submit(_write_text, self.root / 'manifest.json', json_text(manifest))


def versions() -> dict:
    return {
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'rdalab': RDALAB_VERSION,
    }


def build_manifest(config, started: float, outputs: Sequence[str], summary: Optional[dict] = None,
                   alarm: Optional[RDALabError] = None, exit_code: int = 0) -> dict:
    """Manifest of a finished (or failed) run"""
    return {
        'experiment': config.experiment,
        'config_hash': config.config_hash(),
        'config': config.to_dict(),
        'versions': versions(),
        'started_at': datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        'wall_time': time.time() - started,
        'outputs': list(outputs),
        'summary': summary or {},
        'alarms': [alarm.payload()] if alarm is not None else [],
        'exit_code': exit_code,
    }


def collect_manifests(outdir: str) -> List[dict]:
    """Every manifest.json under outdir, sorted by experiment name"""
    manifests = []
    for path in sorted(Path(outdir).glob('*/manifest.json')):
        try:
            manifests.append(json.loads(path.read_text(encoding='utf-8')))
        except json.JSONDecodeError as e:
            logger.warning(f"⚠️  skipping unreadable manifest {path}: {e}")
    return manifests


def _headline(summary: dict) -> str:
    parts = []
    for key in sorted(summary):
        value = summary[key]
        if isinstance(value, bool):
            parts.append(f"{key}={'yes' if value else 'no'}")
        elif isinstance(value, float):
            parts.append(f"{key}={value:.4g}")
        elif isinstance(value, int):
            parts.append(f"{key}={value}")
    return ", ".join(parts)


def summary_table(manifests: Sequence[dict]) -> str:
    """Plain-text table: experiment, exit code, wall time, alarm code, headline numbers"""
    header = ("experiment", "exit", "wall [s]", "alarm", "summary")
    rows = []
    for m in manifests:
        alarm = m['alarms'][0]['code'] if m.get('alarms') else "-"
        rows.append((m['experiment'], str(m['exit_code']), f"{m['wall_time']:.2f}", alarm,
                     _headline(m.get('summary', {}))))
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i]) for i in range(4)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header[:4], widths)) + "  " + header[4]]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r[:4], widths)) + "  " + r[4])
    return "\n".join(lines)
