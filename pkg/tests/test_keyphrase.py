import numpy as np
import pytest

from finprog.errors import EmptyGraph
from finprog.keyphrase import (
    TokenGraph,
    build_token_graph,
    count_occurrences,
    extract_header_keyphrases,
    extract_textrank_keyphrases,
    load_stopwords,
    pagerank,
)


def _dense_pagerank(adj, damping, iterations=2000):
    """Textbook power iteration on a dense Google matrix."""
    n = len(adj)
    out = adj.sum(axis=1)
    m = np.zeros((n, n))
    for j in range(n):
        m[:, j] = adj[j] / out[j] if out[j] else 1.0 / n
    g = damping * m + (1 - damping) / n
    x = np.full(n, 1.0 / n)
    for _ in range(iterations):
        x = g @ x
    return x / x.sum()


def test_single_node_graph():
    assert pagerank(TokenGraph(("a",), {})) == {"a": pytest.approx(1.0)}


def test_two_node_graph_is_symmetric():
    scores = pagerank(build_token_graph(["a", "b"], window=2))
    assert scores["a"] == pytest.approx(0.5)
    assert scores["b"] == pytest.approx(0.5)


def test_path_graph_matches_dense_oracle():
    g = TokenGraph(("a", "b", "c", "d"), {("a", "b"): 1, ("b", "c"): 1, ("c", "d"): 1})
    scores = pagerank(g, damping=0.85, tol=1e-9, max_iter=1000)
    oracle = _dense_pagerank(g.adjacency(), 0.85)
    for node, expected in zip(g.nodes, oracle):
        assert scores[node] == pytest.approx(expected, abs=1e-6)
    assert sum(scores.values()) == pytest.approx(1.0, abs=1e-9)
    assert scores["b"] > scores["a"] and scores["c"] > scores["d"]


def test_hub_outranks_its_leaves():
    g = TokenGraph(("a", "hub", "b", "c"), {("a", "hub"): 1, ("b", "hub"): 1, ("c", "hub"): 1})
    scores = pagerank(g, damping=0.85, tol=1e-10, max_iter=1000)
    oracle = _dense_pagerank(g.adjacency(), 0.85)
    for node, expected in zip(g.nodes, oracle):
        assert scores[node] == pytest.approx(expected, abs=1e-6)
    assert scores["hub"] == pytest.approx(0.4797, abs=1e-4)
    for leaf in "abc":
        assert scores[leaf] == pytest.approx(0.1734, abs=1e-4)


def test_scores_are_positive_and_stable_under_more_iterations():
    g = build_token_graph("net sales rose while operating income and net sales fell".split(), window=3)
    converged = pagerank(g, tol=1e-8, max_iter=500)
    more = pagerank(g, tol=1e-8, max_iter=5000)
    assert all(v > 0 for v in converged.values())
    for node in g.nodes:
        assert abs(converged[node] - more[node]) <= 1e-8


def test_empty_graph():
    with pytest.raises(EmptyGraph):
        pagerank(TokenGraph((), {}))


def test_window_controls_edges():
    g = build_token_graph(["a", "b", "c"], window=2)
    assert g.weights == {("a", "b"): 1, ("b", "c"): 1}
    g = build_token_graph(["a", "b", "c"], window=3)
    assert ("a", "c") in g.weights


def test_count_occurrences_is_non_overlapping():
    assert count_occurrences(("a", "a"), [["a", "a", "a"]]) == 1
    assert count_occurrences(("x",), [["x", "y"], ["x"]]) == 2


def test_repeated_phrase_is_extracted():
    text = "the total units in the north rose . the total units in the south fell . the total units overall were stable ."
    phrases = extract_textrank_keyphrases("", [text])
    by_tokens = {kp.tokens: kp for kp in phrases}
    assert ("total", "units") in by_tokens
    assert by_tokens[("total", "units")].frequency == 3
    assert by_tokens[("total", "units")].surface.lower() == "total units"


def test_unique_tokens_give_no_keyphrases():
    assert extract_textrank_keyphrases("revenue grew", ["operating margin improved slightly"]) == []
    assert extract_textrank_keyphrases("", []) == []


def test_question_and_evidence_share_a_keyphrase():
    phrases = extract_textrank_keyphrases(
        "what is the value of Units?",
        ["The Charlotte at Midtown of Units is 279", "The Acklen West End of Units is 320"],
    )
    units = [kp for kp in phrases if kp.tokens == ("units",)]
    assert units and units[0].frequency == 3


def test_every_keyphrase_occurs_at_least_twice_verbatim():
    question = "how did net sales and operating income change?"
    evidence = [
        "net sales increased 5% while operating income declined .",
        "net sales in europe were flat ; operating income in europe rose .",
    ]
    source = " ".join([question, *evidence]).lower()
    phrases = extract_textrank_keyphrases(question, evidence)
    assert phrases
    for kp in phrases:
        assert kp.frequency >= 2
        assert kp.surface.lower() in source


def test_ties_break_by_first_occurrence():
    # alpha and beta score the same; only one of the two nodes is selected
    phrases = extract_textrank_keyphrases("", ["alpha beta . alpha beta ."])
    assert [kp.tokens for kp in phrases] == [("alpha",)]


def test_best_connected_token_is_selected_over_the_first_one():
    # costs comes first, but revenue has the most co-occurrences
    phrases = extract_textrank_keyphrases("", ["costs revenue margin revenue ."], stopwords=frozenset())
    assert [kp.tokens for kp in phrases] == [("revenue",)]
    assert phrases[0].frequency == 2


def test_header_keyphrases():
    table = [
        ["", "Units", "Occupancy"],
        ["The Charlotte at Midtown", "279", "95%"],
        ["The Acklen West End", "320", "93%"],
    ]
    phrases = {kp.surface: kp.frequency for kp in extract_header_keyphrases(table)}
    assert phrases["Units"] == 2
    assert phrases["Occupancy"] == 2
    # a row header appears once per cell of its own row
    assert phrases["The Charlotte at Midtown"] == 2


def test_row_header_mentioned_once_is_excluded():
    table = [["", "Units"], ["The acklen west end", "320"], ["The Charlotte at Midtown", "279"]]
    phrases = {kp.surface for kp in extract_header_keyphrases(table)}
    assert "Units" in phrases
    assert "The acklen west end" not in phrases


def test_header_keyphrases_of_empty_table():
    assert extract_header_keyphrases([]) == []
    assert extract_header_keyphrases([["", "Units"]]) == []


def test_stoplist_override(tmp_path, monkeypatch):
    path = tmp_path / "stop.txt"
    path.write_text("Units\nthe\n", encoding="utf-8")
    monkeypatch.setenv("FINPROG_STOPLIST", str(path))
    assert load_stopwords() == frozenset({"units", "the"})
    monkeypatch.delenv("FINPROG_STOPLIST")
    assert "of" in load_stopwords()
