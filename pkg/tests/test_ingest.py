"""Activity screening and contribution fetching against recorded fixtures."""

import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import httpx
import pytest

from ethoscan.ingest import (
    ActivityCriteria,
    AuthError,
    FetchSettings,
    HttpGitHubTransport,
    IngestError,
    RateBudgetExceeded,
    RecordedTransport,
    RepoProfile,
    TransportError,
    check_activity,
    fetch_contributions,
    profile_repo,
)

FIXTURES = Path(__file__).parent / "fixtures"
NOW = datetime(2025, 1, 15, tzinfo=timezone.utc)
WINDOW = (datetime(2024, 1, 1, tzinfo=timezone.utc),
          datetime(2025, 1, 1, tzinfo=timezone.utc))


def profile(total=1500, open_=400, days_ago=2):
    return RepoProfile(
        repo="acme/widgets",
        total_issues=total,
        open_issues=open_,
        last_commit_at=NOW - timedelta(days=days_ago),
        sampled_at=NOW,
    )


class TestActivity:
    def test_active_project(self):
        assert check_activity(profile(1500, 400, 2)) is True

    def test_total_issue_boundary_is_strict(self):
        assert check_activity(profile(1000, 400, 2)) is False
        assert check_activity(profile(1001, 400, 2)) is True

    def test_open_issue_boundary_is_inclusive(self):
        assert check_activity(profile(1500, 300, 2)) is True
        assert check_activity(profile(1500, 299, 2)) is False

    def test_commit_age_boundary(self):
        assert check_activity(profile(1500, 400, 7)) is True
        assert check_activity(profile(1500, 400, 8)) is False

    def test_criteria_must_be_positive(self):
        with pytest.raises(IngestError):
            ActivityCriteria(min_total_issues=0)

    def test_profile_invariant(self):
        with pytest.raises(IngestError):
            RepoProfile("r", 10, 20, NOW, NOW)


def basic_transport():
    return RecordedTransport.from_file(FIXTURES / "github_basic.json")


SETTINGS = FetchSettings(per_page=2)


class TestFetch:
    def test_fixture_yields_six_contributions(self):
        contributions = fetch_contributions("acme/widgets", WINDOW,
                                            basic_transport(), SETTINGS)
        assert len(contributions) == 6
        kinds = [c.kind for c in contributions]
        assert kinds.count("issue") == 2
        assert kinds.count("comment") == 4

    def test_pull_request_issue_is_excluded(self):
        contributions = fetch_contributions("acme/widgets", WINDOW,
                                            basic_transport(), SETTINGS)
        assert not any(c.id.endswith("/issues/102") for c in contributions)

    def test_issue_body_concatenates_title_and_body(self):
        contributions = fetch_contributions("acme/widgets", WINDOW,
                                            basic_transport(), SETTINGS)
        issue101 = next(c for c in contributions if c.id.endswith("/issues/101"))
        assert issue101.body == ("Crash on startup\n\n"
                                 "Segfault when the config file is missing.")
        issue103 = next(c for c in contributions if c.id.endswith("/issues/103"))
        assert issue103.body == "Feature: dark mode"  # empty body, title kept

    def test_sorted_by_created_then_id(self):
        contributions = fetch_contributions("acme/widgets", WINDOW,
                                            basic_transport(), SETTINGS)
        keys = [(c.created_at, c.id) for c in contributions]
        assert keys == sorted(keys)

    def test_pagination_gives_each_item_exactly_once(self):
        contributions = fetch_contributions("acme/widgets", WINDOW,
                                            basic_transport(), SETTINGS)
        ids = [c.id for c in contributions]
        assert len(ids) == len(set(ids))

    def test_idempotent_over_the_same_fixture(self):
        transport = basic_transport()
        first = fetch_contributions("acme/widgets", WINDOW, transport, SETTINGS)
        transport.reset()
        second = fetch_contributions("acme/widgets", WINDOW, transport, SETTINGS)
        assert first == second

    def test_empty_window_is_empty(self):
        start = WINDOW[0]
        assert fetch_contributions("acme/widgets", (start, start),
                                   basic_transport(), SETTINGS) == []

    def test_backwards_window_rejected(self):
        with pytest.raises(IngestError):
            fetch_contributions("acme/widgets", (WINDOW[1], WINDOW[0]),
                                basic_transport(), SETTINGS)

    def test_no_empty_bodies_and_valid_kinds(self):
        contributions = fetch_contributions("acme/widgets", WINDOW,
                                            basic_transport(), SETTINGS)
        assert all(c.body.strip() for c in contributions)
        assert all(c.kind in ("issue", "comment") for c in contributions)

    def test_out_of_window_and_pr_comments_filtered(self):
        pairs = [
            {"request": {"path": "/repos/r/x/issues",
                         "params": {"state": "all",
                                    "since": "2024-01-01T00:00:00+00:00",
                                    "sort": "created", "direction": "asc",
                                    "per_page": 100, "page": 1}},
             "response": {"status": 200, "json": [
                 {"number": 7, "title": "Old one", "body": "b",
                  "created_at": "2023-12-01T00:00:00Z",
                  "user": {"login": "a"}, "html_url": "u"},
                 {"number": 8, "title": "PR", "body": "b",
                  "created_at": "2024-02-01T00:00:00Z",
                  "user": {"login": "a"}, "html_url": "u",
                  "pull_request": {}},
             ]}},
            {"request": {"path": "/repos/r/x/issues/comments",
                         "params": {"since": "2024-01-01T00:00:00+00:00",
                                    "sort": "created", "direction": "asc",
                                    "per_page": 100, "page": 1}},
             "response": {"status": 200, "json": [
                 {"id": 1, "body": "on the PR",
                  "created_at": "2024-02-02T00:00:00Z",
                  "user": {"login": "a"},
                  "html_url": "https://github.com/r/x/pull/8#issuecomment-1",
                  "issue_url": "https://api.github.com/repos/r/x/issues/8"},
                 {"id": 2, "body": "   ",
                  "created_at": "2024-02-03T00:00:00Z",
                  "user": {"login": "a"},
                  "html_url": "https://github.com/r/x/issues/9#issuecomment-2",
                  "issue_url": "https://api.github.com/repos/r/x/issues/9"},
             ]}},
        ]
        window = (datetime(2024, 1, 1, tzinfo=timezone.utc),
                  datetime(2025, 1, 1, tzinfo=timezone.utc))
        contributions = fetch_contributions("r/x", window,
                                            RecordedTransport(pairs))
        assert contributions == []

    def test_unrecorded_request_is_an_error(self):
        with pytest.raises(TransportError, match="no recorded response"):
            fetch_contributions("other/repo", WINDOW, basic_transport(), SETTINGS)


def test_fetch_many_bounded_parallel():
    from ethoscan.ingest import fetch_many

    results = fetch_many(["acme/widgets"], WINDOW,
                         transport_factory=basic_transport,
                         settings=SETTINGS, parallel_repos=2)
    assert len(results["acme/widgets"]) == 6

    with pytest.raises(IngestError):
        fetch_many(["acme/widgets"], WINDOW, basic_transport,
                   SETTINGS, parallel_repos=0)


def test_profile_repo_from_fixture():
    pairs = [
        {"request": {"path": "/search/issues",
                     "params": {"q": "repo:acme/widgets is:issue", "per_page": 1}},
         "response": {"status": 200, "json": {"total_count": 1500}}},
        {"request": {"path": "/repos/acme/widgets", "params": {}},
         "response": {"status": 200, "json": {"open_issues_count": 400}}},
        {"request": {"path": "/repos/acme/widgets/commits",
                     "params": {"per_page": 1}},
         "response": {"status": 200, "json": [
             {"commit": {"committer": {"date": "2025-01-13T00:00:00Z"}}}]}},
    ]
    result = profile_repo("acme/widgets", RecordedTransport(pairs), now=NOW)
    assert result.total_issues == 1500
    assert result.open_issues == 400
    assert check_activity(result) is True


class TestHttpTransport:
    def make(self, handler, **kw):
        client = httpx.Client(transport=httpx.MockTransport(handler))
        return HttpGitHubTransport(token="t", client=client, **kw)

    def test_rate_limit_waits_until_reset(self):
        calls = {"n": 0}
        sleeps = []

        def handler(request):
            calls["n"] += 1
            if calls["n"] == 1:
                return httpx.Response(403, headers={
                    "X-RateLimit-Remaining": "0",
                    "X-RateLimit-Reset": "1105",
                }, json={"message": "rate limited"})
            return httpx.Response(200, json={"ok": True})

        transport = self.make(handler, sleep=sleeps.append, clock=lambda: 1100.0)
        response = transport.get("/anything", {})
        assert response.data == {"ok": True}
        assert sleeps == [6.0]  # (1105 - 1100) + 1

    def test_rate_budget_exhaustion_carries_resume_cursor(self):
        def handler(request):
            return httpx.Response(403, headers={
                "X-RateLimit-Remaining": "0",
                "X-RateLimit-Reset": "99999",
            }, json={})

        transport = self.make(handler, sleep=lambda s: None,
                              clock=lambda: 0.0, max_rate_wait=10.0)
        with pytest.raises(RateBudgetExceeded) as err:
            transport.get("/repos/a/b/issues", {"page": 3})
        assert err.value.resume == {"path": "/repos/a/b/issues",
                                    "params": {"page": 3}}

    def test_auth_errors(self):
        transport = self.make(lambda r: httpx.Response(401, json={}))
        with pytest.raises(AuthError):
            transport.get("/x", {})
        transport = self.make(lambda r: httpx.Response(403, json={}))
        with pytest.raises(AuthError):
            transport.get("/x", {})

    def test_5xx_retries_then_succeeds(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] < 3:
                return httpx.Response(502)
            return httpx.Response(200, json=[])

        transport = self.make(handler, sleep=lambda s: None)
        assert transport.get("/x", {}).data == []
        assert calls["n"] == 3

    def test_5xx_exhaustion_raises(self):
        transport = self.make(lambda r: httpx.Response(500),
                              sleep=lambda s: None, max_5xx_retries=2)
        with pytest.raises(TransportError, match="after 2 retries"):
            transport.get("/x", {})
