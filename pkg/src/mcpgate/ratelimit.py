"""Token-bucket rate limiting keyed per user, server, and tool.

Each configured limit is a pattern scope; every concrete
(user, server, tool) that matches gets its own bucket, so one noisy
principal cannot starve the rest.  Time is supplied by the caller,
which keeps tests exact and the gateway free to use a monotonic clock.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fnmatch import fnmatchcase


@dataclass
class RateLimit:
    limit_id: str
    subject: str = "*"  # user id or role pattern
    server_id: str = "*"
    tool: str = "*"
    capacity: int = 10
    refill_per_sec: float = 1.0

    def matches(self, user_id: str, roles: tuple, server_id: str, tool: str) -> bool:
        subject_ok = fnmatchcase(user_id, self.subject) or any(
            fnmatchcase(r, self.subject) for r in roles
        )
        return subject_ok and fnmatchcase(server_id, self.server_id) and fnmatchcase(tool, self.tool)


@dataclass
class RateCheck:
    allowed: bool
    remaining_wait: float = 0.0
    limit_id: str = ""


@dataclass
class _Bucket:
    tokens: float
    last: float


class RateLimiter:
    def __init__(self, limits: list):
        self._limits = list(limits)
        self._buckets: dict = {}
        self._lock = threading.Lock()

    def _bucket(self, limit: RateLimit, key: tuple, now: float) -> _Bucket:
        bucket = self._buckets.get(key)
        if bucket is None:
            bucket = _Bucket(tokens=float(limit.capacity), last=now)
            self._buckets[key] = bucket
        else:
            elapsed = max(0.0, now - bucket.last)
            bucket.tokens = min(float(limit.capacity), bucket.tokens + elapsed * limit.refill_per_sec)
            bucket.last = now
        return bucket

    def check(self, user_id: str, server_id: str, tool: str, now: float, roles: tuple = ()) -> RateCheck:
        """Consume one token from every matching bucket, or none at all.

        A denied call consumes nothing, so waiting out ``remaining_wait``
        genuinely clears the limit.
        """
        with self._lock:
            hits = []
            for limit in self._limits:
                if not limit.matches(user_id, roles, server_id, tool):
                    continue
                key = (limit.limit_id, user_id, server_id, tool)
                hits.append((limit, self._bucket(limit, key, now)))
            for limit, bucket in hits:
                # Tolerance absorbs float drift from accumulated refills.
                if bucket.tokens < 1.0 - 1e-9:
                    wait = (1.0 - bucket.tokens) / limit.refill_per_sec if limit.refill_per_sec > 0 else float("inf")
                    return RateCheck(allowed=False, remaining_wait=wait, limit_id=limit.limit_id)
            for _, bucket in hits:
                bucket.tokens -= 1.0
            return RateCheck(allowed=True)
