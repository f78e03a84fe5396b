"""GitHub ingestion: activity screening and non-coding contribution fetch.

A non-coding contribution is an issue (title and body concatenated with
a blank line) or an issue comment.  Pull requests and their discussion
threads are excluded.  All HTTP goes through a small transport
interface so tests and offline runs replay recorded fixtures; the live
transport waits out rate limits (within a budget) instead of dropping
pages.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Iterator, Mapping, Protocol, Sequence

import httpx

from .corpus import Contribution, parse_timestamp, pseudonymize_author
from .errors import EthoscanError

GITHUB_API = "https://api.github.com"
TOKEN_ENV = "GITHUB_TOKEN"
DEFAULT_PAGE_SIZE = 100


class IngestError(EthoscanError):
    pass


class AuthError(IngestError):
    pass


class TransportError(IngestError):
    pass


class RateBudgetExceeded(IngestError):
    """Rate limit wait would exceed the configured budget.

    Carries the request that should be replayed when resuming.
    """

    def __init__(self, wait_seconds: float, resume: dict):
        self.wait_seconds = wait_seconds
        self.resume = resume
        super().__init__(
            f"rate limit requires waiting {wait_seconds:.0f}s, over budget; "
            f"resume at {resume}")


@dataclass(frozen=True)
class ActivityCriteria:
    """Screening thresholds; total issues is a strict greater-than."""

    min_total_issues: int = 1000
    min_open_issues: int = 300
    max_days_since_commit: int = 7

    def __post_init__(self):
        if min(self.min_total_issues, self.min_open_issues,
               self.max_days_since_commit) <= 0:
            raise IngestError("activity thresholds must be positive")


@dataclass(frozen=True)
class RepoProfile:
    repo: str
    total_issues: int
    open_issues: int
    last_commit_at: datetime
    sampled_at: datetime

    def __post_init__(self):
        if self.open_issues > self.total_issues:
            raise IngestError(
                f"{self.repo}: open issues ({self.open_issues}) exceed total "
                f"({self.total_issues})")


def check_activity(profile: RepoProfile,
                   criteria: ActivityCriteria = ActivityCriteria()) -> bool:
    age = profile.sampled_at - profile.last_commit_at
    return (profile.total_issues > criteria.min_total_issues
            and profile.open_issues >= criteria.min_open_issues
            and age <= timedelta(days=criteria.max_days_since_commit))


@dataclass
class GitHubResponse:
    status: int
    headers: Mapping[str, str]
    data: object


class GitHubTransport(Protocol):
    def get(self, path: str, params: Mapping[str, object]) -> GitHubResponse:
        ...


def _canonical_request(path: str, params: Mapping[str, object]) -> str:
    normalized = sorted((k, str(v)) for k, v in params.items())
    return path + "?" + "&".join(f"{k}={v}" for k, v in normalized)


class HttpGitHubTransport:
    """Live REST v3 transport with rate-limit waiting and 5xx backoff."""

    def __init__(self, token: str | None = None, base_url: str = GITHUB_API,
                 sleep: Callable[[float], None] = time.sleep,
                 max_rate_wait: float = 900.0, max_5xx_retries: int = 3,
                 clock: Callable[[], float] = time.time,
                 client: httpx.Client | None = None):
        import os

        self._token = token if token is not None else os.environ.get(TOKEN_ENV)
        self._base_url = base_url.rstrip("/")
        self._sleep = sleep
        self._max_rate_wait = max_rate_wait
        self._max_5xx = max_5xx_retries
        self._clock = clock
        self._client = client or httpx.Client(timeout=30.0)

    def _headers(self) -> dict[str, str]:
        headers = {"Accept": "application/vnd.github+json"}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        return headers

    def get(self, path: str, params: Mapping[str, object]) -> GitHubResponse:
        url = self._base_url + path
        backoffs = 0
        while True:
            try:
                response = self._client.get(url, params=dict(params),
                                            headers=self._headers())
            except httpx.HTTPError as exc:
                raise TransportError(f"GET {path}: {exc}") from None

            if response.status_code == 401:
                raise AuthError(f"GET {path}: authentication failed (401)")
            if response.status_code in (403, 429):
                remaining = response.headers.get("X-RateLimit-Remaining")
                if remaining == "0":
                    reset = float(response.headers.get("X-RateLimit-Reset", "0"))
                    wait = max(reset - self._clock(), 0.0) + 1.0
                    if wait > self._max_rate_wait:
                        raise RateBudgetExceeded(
                            wait, resume={"path": path, "params": dict(params)})
                    self._sleep(wait)
                    continue
                raise AuthError(
                    f"GET {path}: forbidden ({response.status_code}); check "
                    "token scopes")
            if response.status_code >= 500:
                if backoffs < self._max_5xx:
                    self._sleep(0.5 * 2 ** backoffs)
                    backoffs += 1
                    continue
                raise TransportError(
                    f"GET {path}: {response.status_code} after "
                    f"{self._max_5xx} retries")
            if response.status_code != 200:
                raise TransportError(
                    f"GET {path}: unexpected status {response.status_code}")
            return GitHubResponse(response.status_code, dict(response.headers),
                                  response.json())


class RecordedTransport:
    """Replays a fixture of (request, response) pairs.

    Requests are keyed by path plus normalized query params; multiple
    recordings of the same request are consumed in file order.  reset()
    rewinds so a fetch can be replayed identically.
    """

    def __init__(self, pairs: list[dict]):
        self._by_request: dict[str, list[GitHubResponse]] = {}
        for pair in pairs:
            request = pair["request"]
            response = pair["response"]
            key = _canonical_request(request["path"], request.get("params", {}))
            self._by_request.setdefault(key, []).append(GitHubResponse(
                status=response.get("status", 200),
                headers=response.get("headers", {}),
                data=response.get("json"),
            ))
        self._cursors: dict[str, int] = {}

    @classmethod
    def from_file(cls, path: str | Path) -> "RecordedTransport":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def reset(self) -> None:
        self._cursors.clear()

    def get(self, path: str, params: Mapping[str, object]) -> GitHubResponse:
        key = _canonical_request(path, params)
        responses = self._by_request.get(key)
        if not responses:
            raise TransportError(f"no recorded response for {key}")
        cursor = self._cursors.get(key, 0)
        index = min(cursor, len(responses) - 1)
        self._cursors[key] = cursor + 1
        return responses[index]


def profile_repo(repo: str, transport: GitHubTransport,
                 now: datetime | None = None) -> RepoProfile:
    """Screening profile: search-count totals, metadata open count, last commit."""
    sampled_at = now or datetime.now(timezone.utc)
    search = transport.get("/search/issues",
                           {"q": f"repo:{repo} is:issue", "per_page": 1})
    total = int(search.data["total_count"])
    meta = transport.get(f"/repos/{repo}", {})
    open_issues = int(meta.data["open_issues_count"])
    commits = transport.get(f"/repos/{repo}/commits", {"per_page": 1})
    if not commits.data:
        raise IngestError(f"{repo}: no commits visible")
    last_commit_at = parse_timestamp(
        commits.data[0]["commit"]["committer"]["date"])
    return RepoProfile(repo, total, open_issues, last_commit_at, sampled_at)


def _paginate(transport: GitHubTransport, path: str,
              params: Mapping[str, object], per_page: int) -> Iterator[dict]:
    page = 1
    while True:
        response = transport.get(path, {**params, "per_page": per_page,
                                        "page": page})
        items = response.data or []
        if not isinstance(items, list):
            raise IngestError(f"{path} page {page}: expected a JSON array")
        yield from items
        if len(items) < per_page:
            return
        page += 1


@dataclass
class FetchSettings:
    author_hash_key: str = "ethoscan-local"
    per_page: int = DEFAULT_PAGE_SIZE


def _issue_body(item: dict) -> str:
    title = (item.get("title") or "").strip()
    body = (item.get("body") or "").strip()
    if title and body:
        return f"{title}\n\n{body}"
    return title or body


def fetch_contributions(repo: str, window: tuple[datetime, datetime],
                        transport: GitHubTransport,
                        settings: FetchSettings = FetchSettings(),
                        ) -> list[Contribution]:
    """All issues and issue comments created in [start, end), sorted.

    Pull requests (and comments on them) are filtered out; items whose
    rendered body is empty are skipped; output is sorted by
    (created_at, id) so fetch order never leaks into datasets.
    """
    start, end = window
    if end < start:
        raise IngestError(f"window end {end} precedes start {start}")
    if start == end:
        return []

    contributions: list[Contribution] = []
    pr_numbers: set[int] = set()

    issue_params = {"state": "all", "since": start.isoformat(),
                    "sort": "created", "direction": "asc"}
    for item in _paginate(transport, f"/repos/{repo}/issues", issue_params,
                          settings.per_page):
        if "pull_request" in item:
            pr_numbers.add(int(item["number"]))
            continue
        created = parse_timestamp(item["created_at"])
        if not (start <= created < end):
            continue
        body = _issue_body(item)
        if not body:
            continue
        contributions.append(Contribution(
            id=f"{repo}/issues/{item['number']}",
            repo=repo,
            kind="issue",
            body=body,
            created_at=created,
            author_key=pseudonymize_author(
                (item.get("user") or {}).get("login", ""),
                settings.author_hash_key),
            url=item.get("html_url"),
        ))

    comment_params = {"since": start.isoformat(), "sort": "created",
                      "direction": "asc"}
    for item in _paginate(transport, f"/repos/{repo}/issues/comments",
                          comment_params, settings.per_page):
        html_url = item.get("html_url") or ""
        if "/pull/" in html_url:
            continue
        issue_url = item.get("issue_url") or ""
        try:
            issue_number = int(issue_url.rstrip("/").rsplit("/", 1)[-1])
        except ValueError:
            issue_number = -1
        if issue_number in pr_numbers:
            continue
        created = parse_timestamp(item["created_at"])
        if not (start <= created < end):
            continue
        body = (item.get("body") or "").strip()
        if not body:
            continue
        contributions.append(Contribution(
            id=f"{repo}/comments/{item['id']}",
            repo=repo,
            kind="comment",
            body=body,
            created_at=created,
            author_key=pseudonymize_author(
                (item.get("user") or {}).get("login", ""),
                settings.author_hash_key),
            url=html_url or None,
        ))

    contributions.sort(key=lambda c: (c.created_at, c.id))
    return contributions


def fetch_many(repos: Sequence[str], window: tuple[datetime, datetime],
               transport_factory: Callable[[], GitHubTransport],
               settings: FetchSettings = FetchSettings(),
               parallel_repos: int = 2) -> dict[str, list[Contribution]]:
    """Fetch several repos, each sequentially, up to parallel_repos at once.

    Each worker gets its own transport so rate-limit pacing stays
    per-repo.
    """
    if parallel_repos < 1:
        raise IngestError("parallel_repos must be >= 1")
    results: dict[str, list[Contribution]] = {}
    with ThreadPoolExecutor(max_workers=parallel_repos) as pool:
        futures = {
            repo: pool.submit(fetch_contributions, repo, window,
                              transport_factory(), settings)
            for repo in repos
        }
        for repo, future in futures.items():
            results[repo] = future.result()
    return results
