//! Leaky n-gram forced-alignment graph.
//!
//! The forced path spells the reference word by word at the top order
//! level. Every forced state also starts a leak chain stepping down one
//! level per arc until the single null state, where a garbage-word loop and
//! a filler loop live; return arcs climb back onto the forced path by
//! consuming the reference word they land on, which is what lets the
//! decoder express deletions, and one epsilon return to the final state
//! covers deletions that run off the end. Fillers additionally attach as
//! detours at every forced state so a single interjected word does not
//! need a full leak descent. How far a return may jump ahead of its leak
//! origin is bounded by `return_window`, enforced by the decoder via the
//! origin it stamps on each token.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textnorm::TokenSeq;

/// Arc costs in the negative-log (nat) domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphWeights {
    pub leak_per_level: f64,
    pub garbage_word: f64,
    pub filler_word: f64,
    pub return_arc: f64,
}

impl Default for GraphWeights {
    fn default() -> Self {
        GraphWeights { leak_per_level: 2.0, garbage_word: 4.0, filler_word: 1.0, return_arc: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArcKind {
    Forced,
    Leak,
    Garbage,
    Filler,
    Return,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArcLabel {
    /// Consumes nothing.
    Epsilon,
    /// Consumes audio frames for this word.
    Word(String),
    /// Zero-cost self-loop tagging a punctuation position; never decoded.
    Punct(String),
}

impl ArcLabel {
    pub fn word(&self) -> Option<&str> {
        match self {
            ArcLabel::Word(w) => Some(w),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub label: ArcLabel,
    pub cost: f64,
    pub kind: ArcKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateInfo {
    /// Number of reference words consumed when this state is reached on the
    /// forced path; leak and filler intermediates inherit their origin's.
    pub ref_position: u32,
    /// n-gram order level: forced states sit at order_n − 1, the null state
    /// at 0, leak intermediates in between.
    pub level: u32,
    pub is_null: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignGraph {
    pub states: Vec<StateInfo>,
    pub arcs: Vec<Arc>,
    pub start: usize,
    pub final_state: usize,
    pub null_state: usize,
    /// Forced-path state ids indexed by reference position 0..=W.
    pub forced_states: Vec<usize>,
    /// The reference word sequence the forced path consumes.
    pub ref_words: Vec<String>,
    pub order_n: u32,
    pub return_window: u32,
    /// Outgoing arc indices per state, in build order.
    pub out_arcs: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("reference contains no words")]
pub struct EmptyReferenceError;

/// Ranked garbage-loop vocabulary, at most [`GarbageVocab::MAX_WORDS`]
/// distinct words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarbageVocab {
    pub words: Vec<String>,
}

impl GarbageVocab {
    pub const MAX_WORDS: usize = 1000;

    /// Builds the loop vocabulary from corpus unigram counts: filler words
    /// first so they are never crowded out, then the remaining words by
    /// descending count (ties alphabetic), truncated to the cap.
    pub fn top_unigrams<'a, I>(counts: I, fillers: &FillerSet) -> GarbageVocab
    where
        I: IntoIterator<Item = (&'a String, &'a u64)>,
    {
        let mut words: Vec<String> = fillers.unigrams().into_iter().collect();
        let mut seen: BTreeSet<String> = words.iter().cloned().collect();
        let mut ranked: Vec<(&String, &u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        for (w, _) in ranked {
            if words.len() >= Self::MAX_WORDS {
                break;
            }
            if seen.insert(w.clone()) {
                words.push(w.clone());
            }
        }
        words.truncate(Self::MAX_WORDS);
        GarbageVocab { words }
    }
}

/// Filler and conjunction phrases the validation pass may count as correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillerSet {
    pub phrases: Vec<Vec<String>>,
}

impl Default for FillerSet {
    fn default() -> Self {
        let phrases = [
            "AH", "UH", "UM", "ER", "ERR", "YOU KNOW", "I MEAN", "SORT OF", "AND", "OR", "BUT",
        ];
        FillerSet {
            phrases: phrases
                .iter()
                .map(|p| p.split(' ').map(str::to_string).collect())
                .collect(),
        }
    }
}

impl FillerSet {
    /// Every distinct single word appearing in any phrase.
    pub fn unigrams(&self) -> BTreeSet<String> {
        self.phrases.iter().flatten().cloned().collect()
    }
}

struct Builder {
    states: Vec<StateInfo>,
    arcs: Vec<Arc>,
}

impl Builder {
    fn state(&mut self, ref_position: u32, level: u32, is_null: bool) -> usize {
        self.states.push(StateInfo { ref_position, level, is_null });
        self.states.len() - 1
    }

    fn arc(&mut self, from: usize, to: usize, label: ArcLabel, cost: f64, kind: ArcKind) {
        self.arcs.push(Arc { from, to, label, cost, kind });
    }

    /// Filler detour consuming `phrase` and looping back to `attach`; the
    /// first arc carries the whole cost.
    fn filler_loop(&mut self, attach: usize, phrase: &[String], cost: f64) {
        let info = self.states[attach];
        let mut from = attach;
        for (k, word) in phrase.iter().enumerate() {
            let to = if k + 1 == phrase.len() {
                attach
            } else {
                self.state(info.ref_position, info.level, false)
            };
            let c = if k == 0 { cost } else { 0.0 };
            self.arc(from, to, ArcLabel::Word(word.clone()), c, ArcKind::Filler);
            from = to;
        }
    }
}

/// Builds the alignment graph for one reference. Punctuation tokens become
/// zero-cost tagged self-loops on the forced state they follow; silence
/// tokens are ignored.
pub fn build_graph(
    ref_seq: &TokenSeq,
    order_n: u32,
    w: &GraphWeights,
    garbage: &GarbageVocab,
    fillers: &FillerSet,
    return_window: u32,
) -> Result<AlignGraph, EmptyReferenceError> {
    assert!(order_n >= 2, "order_n must be at least 2");
    let mut ref_words: Vec<String> = Vec::new();
    // Punctuation attaches after the word most recently seen.
    let mut punct_after: Vec<(usize, String)> = Vec::new();
    for tok in &ref_seq.tokens {
        match tok.kind {
            crate::textnorm::TokenKind::Word => ref_words.push(tok.text.clone()),
            crate::textnorm::TokenKind::Punct => punct_after.push((ref_words.len(), tok.text.clone())),
            crate::textnorm::TokenKind::Silence => {}
        }
    }
    if ref_words.is_empty() {
        return Err(EmptyReferenceError);
    }
    let n_words = ref_words.len();
    let top_level = order_n - 1;

    let mut b = Builder { states: Vec::new(), arcs: Vec::new() };
    let forced_states: Vec<usize> =
        (0..=n_words).map(|j| b.state(j as u32, top_level, false)).collect();
    let null_state = b.state(0, 0, true);
    let start = forced_states[0];
    let final_state = forced_states[n_words];

    for (j, word) in ref_words.iter().enumerate() {
        b.arc(
            forced_states[j],
            forced_states[j + 1],
            ArcLabel::Word(word.clone()),
            0.0,
            ArcKind::Forced,
        );
    }
    for (after, sym) in &punct_after {
        let s = forced_states[*after];
        b.arc(s, s, ArcLabel::Punct(sym.clone()), 0.0, ArcKind::Forced);
    }

    for &s in &forced_states {
        let origin = b.states[s].ref_position;
        let mut from = s;
        for level in (1..top_level).rev() {
            let to = b.state(origin, level, false);
            b.arc(from, to, ArcLabel::Epsilon, w.leak_per_level, ArcKind::Leak);
            from = to;
        }
        b.arc(from, null_state, ArcLabel::Epsilon, w.leak_per_level, ArcKind::Leak);
    }

    for g in &garbage.words {
        b.arc(null_state, null_state, ArcLabel::Word(g.clone()), w.garbage_word, ArcKind::Garbage);
    }

    for attach in forced_states.iter().copied().chain(std::iter::once(null_state)) {
        for phrase in &fillers.phrases {
            b.filler_loop(attach, phrase, w.filler_word);
        }
    }

    for (j, word) in ref_words.iter().enumerate() {
        b.arc(
            null_state,
            forced_states[j + 1],
            ArcLabel::Word(word.clone()),
            w.return_arc,
            ArcKind::Return,
        );
    }
    b.arc(null_state, final_state, ArcLabel::Epsilon, w.return_arc, ArcKind::Return);

    let mut out_arcs = vec![Vec::new(); b.states.len()];
    for (i, arc) in b.arcs.iter().enumerate() {
        out_arcs[arc.from].push(i);
    }

    Ok(AlignGraph {
        states: b.states,
        arcs: b.arcs,
        start,
        final_state,
        null_state,
        forced_states,
        ref_words,
        order_n,
        return_window,
        out_arcs,
    })
}

impl AlignGraph {
    /// Debug dump, one `from to label cost kind` line per arc.
    pub fn to_arc_list(&self) -> String {
        let mut out = String::new();
        for arc in &self.arcs {
            let label = match &arc.label {
                ArcLabel::Epsilon => "<eps>",
                ArcLabel::Word(w) => w.as_str(),
                ArcLabel::Punct(p) => p.as_str(),
            };
            let kind = match arc.kind {
                ArcKind::Forced => "FORCED",
                ArcKind::Leak => "LEAK",
                ArcKind::Garbage => "GARBAGE",
                ArcKind::Filler => "FILLER",
                ArcKind::Return => "RETURN",
            };
            out.push_str(&format!("{} {} {} {} {}\n", arc.from, arc.to, label, arc.cost, kind));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "issue")]
pub enum GraphIssue {
    NoFinal,
    NullStateCount { count: usize },
    NegativeCost { arc: usize },
    UnreachableState { state: usize },
    BrokenForcedPath { at_position: usize },
}

/// Structural checks; an empty report means the graph is well-formed.
pub fn validate_graph(g: &AlignGraph) -> Vec<GraphIssue> {
    let mut issues = Vec::new();
    if g.final_state >= g.states.len() {
        issues.push(GraphIssue::NoFinal);
    }
    let nulls = g.states.iter().filter(|s| s.is_null).count();
    if nulls != 1 {
        issues.push(GraphIssue::NullStateCount { count: nulls });
    }
    for (i, arc) in g.arcs.iter().enumerate() {
        if arc.cost < 0.0 {
            issues.push(GraphIssue::NegativeCost { arc: i });
        }
    }

    let mut seen = vec![false; g.states.len()];
    let mut stack = vec![g.start];
    seen[g.start] = true;
    while let Some(s) = stack.pop() {
        for &a in &g.out_arcs[s] {
            let to = g.arcs[a].to;
            if !seen[to] {
                seen[to] = true;
                stack.push(to);
            }
        }
    }
    for (s, ok) in seen.iter().enumerate() {
        if !ok {
            issues.push(GraphIssue::UnreachableState { state: s });
        }
    }

    // The forced path must be a single linear word-consuming chain;
    // punctuation self-loops are tags, not path steps.
    for (j, &s) in g.forced_states.iter().enumerate().take(g.forced_states.len() - 1) {
        let nexts: Vec<&Arc> = g.out_arcs[s]
            .iter()
            .map(|&a| &g.arcs[a])
            .filter(|a| a.kind == ArcKind::Forced && a.to != a.from)
            .collect();
        let good = nexts.len() == 1
            && nexts[0].to == g.forced_states[j + 1]
            && nexts[0].label.word() == Some(g.ref_words[j].as_str());
        if !good {
            issues.push(GraphIssue::BrokenForcedPath { at_position: j });
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::normalize_text;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn tiny_garbage() -> GarbageVocab {
        GarbageVocab { words: vec!["FOO".into(), "BAR".into()] }
    }

    fn build(text: &str, order_n: u32) -> AlignGraph {
        build_graph(
            &normalize_text(text),
            order_n,
            &GraphWeights::default(),
            &tiny_garbage(),
            &FillerSet::default(),
            10,
        )
        .unwrap()
    }

    #[test]
    fn five_words_order_four_has_six_forced_states_and_three_step_leaks() {
        let g = build("A B C D E", 4);
        assert_eq!(g.forced_states.len(), 6);
        for &s in &g.forced_states {
            // Greedy leak descent: exactly three arcs to the null state.
            let mut cur = s;
            let mut hops = 0;
            let mut cost = 0.0;
            while !g.states[cur].is_null {
                let leak = g.out_arcs[cur]
                    .iter()
                    .map(|&a| &g.arcs[a])
                    .find(|a| a.kind == ArcKind::Leak)
                    .expect("leak arc");
                cost += leak.cost;
                cur = leak.to;
                hops += 1;
            }
            assert_eq!(hops, 3);
            assert_eq!(cost, 3.0 * GraphWeights::default().leak_per_level);
        }
    }

    #[test]
    fn order_two_leaks_straight_to_null() {
        let g = build("A B C", 2);
        for &s in &g.forced_states {
            let leak = g.out_arcs[s]
                .iter()
                .map(|&a| &g.arcs[a])
                .find(|a| a.kind == ArcKind::Leak)
                .unwrap();
            assert!(g.states[leak.to].is_null);
        }
    }

    #[test]
    fn arc_counts_match_an_explicit_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let fillers = FillerSet::default();
        let garbage = tiny_garbage();
        for _ in 0..30 {
            let w = rng.gen_range(1..=10usize);
            let order_n = rng.gen_range(2..=5u32);
            let mut words = Vec::new();
            let mut punct = 0usize;
            for i in 0..w {
                let mut s = format!("K{}", (b'A' + i as u8) as char);
                if rng.gen_bool(0.3) {
                    s.push(',');
                    punct += 1;
                }
                words.push(s);
            }
            let g = build_graph(
                &normalize_text(&words.join(" ")),
                order_n,
                &GraphWeights::default(),
                &garbage,
                &fillers,
                5,
            )
            .unwrap();

            let by_kind = |k: ArcKind| g.arcs.iter().filter(|a| a.kind == k).count();
            let filler_arc_words: usize = fillers.phrases.iter().map(|p| p.len()).sum();
            assert_eq!(by_kind(ArcKind::Forced), w + punct);
            assert_eq!(by_kind(ArcKind::Leak), (w + 1) * (order_n as usize - 1));
            assert_eq!(by_kind(ArcKind::Garbage), garbage.words.len());
            assert_eq!(by_kind(ArcKind::Filler), (w + 2) * filler_arc_words);
            assert_eq!(by_kind(ArcKind::Return), w + 1);
            assert_eq!(
                g.arcs.len(),
                w + punct
                    + (w + 1) * (order_n as usize - 1)
                    + garbage.words.len()
                    + (w + 2) * filler_arc_words
                    + w
                    + 1
            );
        }
    }

    #[test]
    fn forced_arcs_spell_the_reference() {
        let g = build("ONE TWO THREE, FOUR.", 3);
        let mut cur = g.start;
        let mut spelled = Vec::new();
        while cur != g.final_state {
            let arc = g.out_arcs[cur]
                .iter()
                .map(|&a| &g.arcs[a])
                .find(|a| a.kind == ArcKind::Forced && a.to != a.from)
                .unwrap();
            spelled.push(arc.label.word().unwrap().to_string());
            cur = arc.to;
        }
        assert_eq!(spelled, g.ref_words);
        assert_eq!(spelled, vec!["ONE", "TWO", "THREE", "FOUR"]);
        // Punctuation shows up as tagged self-loops, not path steps.
        let tags: Vec<&Arc> =
            g.arcs.iter().filter(|a| matches!(a.label, ArcLabel::Punct(_))).collect();
        assert_eq!(tags.len(), 2);
        assert!(tags.iter().all(|a| a.from == a.to));
    }

    #[test]
    fn return_arcs_consume_their_landing_word() {
        let g = build("PA QO RU", 4);
        let returns: Vec<&Arc> =
            g.arcs.iter().filter(|a| a.kind == ArcKind::Return).collect();
        assert_eq!(returns.len(), 4);
        for arc in &returns[..3] {
            assert_eq!(arc.from, g.null_state);
            let pos = g.states[arc.to].ref_position as usize;
            assert_eq!(arc.label.word(), Some(g.ref_words[pos - 1].as_str()));
        }
        let last = returns[3];
        assert_eq!(last.label, ArcLabel::Epsilon);
        assert_eq!(last.to, g.final_state);
    }

    #[test]
    fn multiword_fillers_detour_and_come_back() {
        let g = build("XA XB", 3);
        // Follow YOU KNOW from the start state.
        let you = g.out_arcs[g.start]
            .iter()
            .map(|&a| &g.arcs[a])
            .find(|a| a.kind == ArcKind::Filler && a.label.word() == Some("YOU"))
            .unwrap();
        assert_eq!(you.cost, GraphWeights::default().filler_word);
        let know = g.out_arcs[you.to]
            .iter()
            .map(|&a| &g.arcs[a])
            .find(|a| a.kind == ArcKind::Filler)
            .unwrap();
        assert_eq!(know.label.word(), Some("KNOW"));
        assert_eq!(know.cost, 0.0);
        assert_eq!(know.to, g.start, "phrase loops back to its attach state");
    }

    #[test]
    fn empty_reference_is_rejected() {
        let err = build_graph(
            &normalize_text(", ,"),
            4,
            &GraphWeights::default(),
            &tiny_garbage(),
            &FillerSet::default(),
            10,
        );
        assert_eq!(err.unwrap_err(), EmptyReferenceError);
    }

    #[test]
    fn build_is_deterministic() {
        let a = build("SOME WORDS IN A ROW, REPEATED WORDS.", 4);
        let b = build("SOME WORDS IN A ROW, REPEATED WORDS.", 4);
        assert_eq!(a.to_arc_list(), b.to_arc_list());
    }

    #[test]
    fn validate_flags_orphans_and_accepts_good_graphs() {
        let mut g = build("GOOD LITTLE GRAPH", 3);
        assert!(validate_graph(&g).is_empty());

        g.states.push(StateInfo { ref_position: 0, level: 1, is_null: false });
        g.out_arcs.push(Vec::new());
        let issues = validate_graph(&g);
        assert!(issues
            .iter()
            .any(|i| matches!(i, GraphIssue::UnreachableState { state } if *state == g.states.len() - 1)));

        let mut broken = build("GOOD LITTLE GRAPH", 3);
        broken.final_state = broken.states.len() + 7;
        assert!(validate_graph(&broken).contains(&GraphIssue::NoFinal));

        let mut negative = build("GOOD LITTLE GRAPH", 3);
        negative.arcs[0].cost = -1.0;
        assert!(validate_graph(&negative)
            .iter()
            .any(|i| matches!(i, GraphIssue::NegativeCost { arc: 0 })));
    }

    #[test]
    fn garbage_vocab_ranks_and_caps() {
        let fillers = FillerSet::default();
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for i in 0..1200u64 {
            counts.insert(format!("W{i:04}"), 5000 - i);
        }
        counts.insert("COMMON".into(), 9999);
        counts.insert("AND".into(), 8888); // already a filler word
        let v = GarbageVocab::top_unigrams(&counts, &fillers);
        assert_eq!(v.words.len(), GarbageVocab::MAX_WORDS);
        let uniq: BTreeSet<&String> = v.words.iter().collect();
        assert_eq!(uniq.len(), v.words.len(), "no duplicates");
        for f in fillers.unigrams() {
            assert!(v.words.contains(&f), "filler {f} must survive the cap");
        }
        assert!(v.words.contains(&"COMMON".to_string()));
        let n_fillers = fillers.unigrams().len();
        assert_eq!(v.words[n_fillers], "COMMON", "highest count ranks first after fillers");
    }

    #[test]
    fn ties_in_garbage_counts_break_alphabetically() {
        let fillers = FillerSet { phrases: vec![] };
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        counts.insert("ZEBRA".into(), 7);
        counts.insert("APPLE".into(), 7);
        counts.insert("MANGO".into(), 9);
        let v = GarbageVocab::top_unigrams(&counts, &fillers);
        assert_eq!(v.words, vec!["MANGO", "APPLE", "ZEBRA"]);
    }
}
