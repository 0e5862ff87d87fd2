"""Recording pipeline: many producers, one bounded queue, one bag writer.

Producers block when the queue is full (back-pressure instead of dropping
records, with RAM as the buffer).  ``close()`` flushes everything already
submitted before the writer shuts down; a writer-side failure is re-raised
to the closer.
"""

from __future__ import annotations

import queue
import threading

from .bag import BagRecord, BagWriter

__all__ = ["RecordingPipeline"]

_SHUTDOWN = object()


class RecordingPipeline:
    def __init__(self, writer: BagWriter, queue_size: int = 256):
        if queue_size < 1:
            raise ValueError("queue_size must be at least 1")
        self._writer = writer
        self._queue: queue.Queue = queue.Queue(maxsize=queue_size)
        self._error: BaseException | None = None
        self._closed = False
        self._thread = threading.Thread(target=self._run, name="bag-writer", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            try:
                if item is _SHUTDOWN:
                    return
                if self._error is None:
                    self._writer.write(item)
            except BaseException as exc:  # surfaced on close()
                self._error = exc
            finally:
                self._queue.task_done()

    def submit(self, record: BagRecord) -> None:
        """Enqueue a record; blocks while the queue is full."""
        if self._closed:
            raise RuntimeError("pipeline is closed")
        self._queue.put(record)

    def close(self) -> None:
        """Flush the queue, stop the writer thread, close the bag."""
        if self._closed:
            return
        self._closed = True
        self._queue.put(_SHUTDOWN)
        self._thread.join()
        self._writer.close()
        if self._error is not None:
            raise self._error

    def __enter__(self) -> "RecordingPipeline":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
