//! One function per acceptance criterion. Each returns its sub-check
//! outcomes so callers can print or assert on them.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use medlogic::dataset::{emit_aqa_record, emit_lu_record, leaks_answer, load_bioasq, QaSample, Split, SplitSpec};
use medlogic::engine::{apply_rule, infuse, oracle_apply};
use medlogic::kg::{build_graph, ConceptId, RelationKind, Triple};
use medlogic::matcher::{build_context_kg, Lexicon, RelationTable};
use medlogic::metrics::{bleu, embedding_average, entity_f1, meteor_lite, rouge_l, set_f1, tokenize, TokenSeq, WordVectors};
use medlogic::pipeline::{Command, Pipeline};
use medlogic::rules::{builtin_rules, parse_rule, parse_rule_file, render_rule, BodyKind, RuleAtom, RuleHead, Variable};
use rand::Rng;

use super::{gen, oracles, toy_config, toy_dir};

#[derive(Debug, Clone)]
pub struct SubCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl SubCheck {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        SubCheck {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol
}

/// 1,000 random graphs (<= 50 triples, <= 20 concepts) x 6 built-ins;
/// apply_rule conclusions must equal oracle_apply exactly, all within 10 s.
pub fn engine_oracle_equivalence() -> Vec<SubCheck> {
    let rules = builtin_rules();
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut derived = 0usize;
    for seed in 0..1000u64 {
        let g = gen::graph(&mut gen::rng(seed), 50, 20);
        for rule in &rules {
            let fast: BTreeSet<Triple> = apply_rule(&g, rule).into_iter().flat_map(|d| d.conclusions).collect();
            let slow = oracle_apply(&g, rule).unwrap();
            derived += slow.len();
            if fast != slow {
                mismatches.push(format!("seed {seed} rule {}", rule.name));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    vec![
        SubCheck::new(
            "set equality",
            mismatches.is_empty(),
            format!("6000 graph-rule pairs, {derived} oracle conclusions, {} mismatches {:?}", mismatches.len(), mismatches.iter().take(3).collect::<Vec<_>>()),
        ),
        SubCheck::new("runtime < 10 s", secs < 10.0, format!("{secs:.2} s")),
    ]
}

/// The six medical rules, written out independently of `builtin_rules`.
pub fn reference_rules() -> Vec<(&'static str, BodyKind, [RuleAtom; 2], Vec<RuleAtom>)> {
    use RelationKind::*;
    use Variable::{X, Y, Z};
    let a = RuleAtom::new;
    vec![
        ("co_occurrence", BodyKind::And, [a(CoOccursWith, X, Y), a(Affects, Y, Z)], vec![a(Affects, X, Z)]),
        ("prevention_causation", BodyKind::And, [a(Prevents, X, Y), a(Causes, Y, Z)], vec![a(Prevents, X, Z)]),
        ("treatment_classification", BodyKind::And, [a(Treats, X, Y), a(IsA, Y, Z)], vec![a(Treats, X, Z)]),
        ("diagnosis_interaction", BodyKind::And, [a(Diagnoses, X, Y), a(InteractsWith, X, Z)], vec![a(Diagnoses, Z, Y)]),
        ("conjunction", BodyKind::And, [a(CoOccursWith, X, Y), a(Affects, X, Z)], vec![a(CoOccursWith, Y, Z)]),
        ("disjunction", BodyKind::Or, [a(Prevents, X, Y), a(Causes, Y, Z)], vec![a(Prevents, X, Z), a(Causes, X, Z)]),
    ]
}

/// parse . render is the identity on the built-ins and 200 generated rules;
/// the shipped rule file matches the reference rules atom for atom.
pub fn dsl_round_trip() -> Vec<SubCheck> {
    let mut out = Vec::new();
    let builtins = builtin_rules();
    let bad: Vec<String> = builtins
        .iter()
        .filter(|r| parse_rule(&render_rule(r)).as_ref() != Ok(*r))
        .map(|r| r.name.clone())
        .collect();
    out.push(SubCheck::new("built-ins round-trip", bad.is_empty(), format!("failures: {bad:?}")));

    let mut rng = gen::rng(20_240_601);
    let mut failures = Vec::new();
    for i in 0..200 {
        let name = gen::rule_name(&mut rng);
        let ast = gen::rule(&mut rng, &name);
        let text = render_rule(&ast);
        match parse_rule(&text) {
            Ok(back) if back == ast && render_rule(&back) == text => {}
            other => failures.push(format!("#{i} {text:?} -> {other:?}")),
        }
    }
    out.push(SubCheck::new(
        "200 generated rules round-trip",
        failures.is_empty(),
        format!("{} failures {:?}", failures.len(), failures.iter().take(2).collect::<Vec<_>>()),
    ));

    let path = super::repo_root().join("rules/medlogic6.rules");
    let shipped = std::fs::read_to_string(&path)
        .map_err(|e| e.to_string())
        .and_then(|t| parse_rule_file(&t).map_err(|e| e.to_string()));
    let detail;
    let pass = match &shipped {
        Ok(rules) => {
            let eqs = reference_rules();
            let mismatched: Vec<&str> = eqs
                .iter()
                .zip(rules.iter().map(Some).chain(std::iter::repeat(None)))
                .filter(|((name, kind, body, head), r)| match r {
                    Some(r) => !(r.name == *name && r.body.kind == *kind && r.body.atoms == *body && r.head.atoms() == head.as_slice()),
                    None => true,
                })
                .map(|(e, _)| e.0)
                .collect();
            detail = format!("{} rules, mismatched: {mismatched:?}", rules.len());
            rules.len() == 6 && mismatched.is_empty() && *rules == builtins
        }
        Err(e) => {
            detail = e.clone();
            false
        }
    };
    out.push(SubCheck::new("medlogic6.rules matches the reference rules", pass, detail));
    out
}

fn toks(words: &[&str]) -> TokenSeq {
    tokenize(&words.join(" "))
}

fn strings(ts: &TokenSeq) -> Vec<String> {
    ts.tokens().to_vec()
}

/// Identity, fixture and 500-case oracle checks for every metric.
pub fn metric_correctness() -> Vec<SubCheck> {
    let mut out = Vec::new();
    let x = toks(&["apremilast", "reduces", "oral", "ulcers", "quickly"]);
    let m = x.len();
    let vectors = WordVectors::from_pairs(
        ["apremilast", "reduces", "oral", "ulcers", "quickly"]
            .iter()
            .enumerate()
            .map(|(i, w)| (w.to_string(), (0..5).map(|d| ((i * 7 + d * 3) % 5) as f64 - 1.5).collect())),
    )
    .unwrap();
    let lex = Lexicon::from_concepts(["apremilast", "oral_ulcers"].map(|c| ConceptId::parse(c).unwrap()));
    let text = x.join();
    for (name, got) in [
        ("identity bleu-1", bleu(&x, &x, 1)),
        ("identity rouge-l", rouge_l(&x, &x)),
        ("identity meteor-lite", meteor_lite(&x, &x)),
        ("identity entity-f1", entity_f1(&text, &text, &lex)),
        ("identity embedding-average", embedding_average(&x, &x, &vectors)),
    ] {
        let mut detail = format!("{got:.12} (want 1.0 +- 1e-9)");
        if name == "identity meteor-lite" {
            detail.push_str(&format!(
                "; one chunk over m={m} matches leaves penalty 0.5/m^3, so the score is 1 - 0.5/{} = {:.12}",
                m * m * m,
                1.0 - 0.5 / (m * m * m) as f64
            ));
        }
        out.push(SubCheck::new(name, within(got, 1.0, 1e-9), detail));
    }

    let fixtures = [
        ("fixture bleu-1 [the,cat,sat]/[the,cat]", bleu(&toks(&["the", "cat", "sat"]), &toks(&["the", "cat"]), 1), 2.0 / 3.0),
        ("fixture rouge-l [a,b,c,d]/[a,c,d,e]", rouge_l(&toks(&["a", "b", "c", "d"]), &toks(&["a", "c", "d", "e"])), 0.75),
        (
            "fixture entity-f1 {a,b}/{b,c}",
            set_f1(&BTreeSet::from(["a", "b"]), &BTreeSet::from(["b", "c"])),
            0.5,
        ),
        ("fixture meteor-lite swap [a,b]/[b,a]", meteor_lite(&toks(&["a", "b"]), &toks(&["b", "a"])), 0.5),
    ];
    for (name, got, want) in fixtures {
        out.push(SubCheck::new(name, within(got, want, 1e-6), format!("{got:.9} (want {want:.9} +- 1e-6)")));
    }

    // entity-f1 through the matcher too
    let lex_abc = Lexicon::from_concepts(["a", "b", "c"].map(|c| ConceptId::parse(c).unwrap()));
    let got = entity_f1("a and b", "b or c", &lex_abc);
    out.push(SubCheck::new("fixture entity-f1 via matcher", within(got, 0.5, 1e-6), format!("{got:.9}")));

    let mut rng = gen::rng(500);
    let mut worst: HashMap<&str, f64> = HashMap::new();
    let mut note = |k: &'static str, got: f64, want: f64| {
        let e = worst.entry(k).or_insert(0.0);
        *e = e.max((got - want).abs());
    };
    let mut emb_vectors = HashMap::new();
    for w in 0..6 {
        emb_vectors.insert(format!("w{w}"), (0..5).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
    }
    let wv = WordVectors::from_pairs(emb_vectors.clone()).unwrap();
    for _ in 0..500 {
        let h = tokenize(&gen::tokens(&mut rng, 7, 4).join(" "));
        let r = tokenize(&gen::tokens(&mut rng, 7, 4).join(" "));
        let (hs, rs) = (strings(&h), strings(&r));
        for n in 1..=4 {
            note("bleu", bleu(&h, &r, n), oracles::bleu(&hs, &rs, n));
        }
        note("rouge-l", rouge_l(&h, &r), oracles::rouge_l(&hs, &rs));
        note("meteor-lite", meteor_lite(&h, &r), oracles::meteor(&hs, &rs));
        // the 7th word has no vector, so all-OOV sides occur
        let he = tokenize(&gen::tokens(&mut rng, 6, 7).join(" "));
        let re = tokenize(&gen::tokens(&mut rng, 6, 7).join(" "));
        note(
            "embedding-average",
            embedding_average(&he, &re, &wv),
            oracles::embedding_average(&strings(&he), &strings(&re), &emb_vectors),
        );
        let pool = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];
        let lex = Lexicon::from_concepts(pool.map(|c| ConceptId::parse(c).unwrap()));
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| -> BTreeSet<&str> { pool.iter().copied().filter(|_| rng.random_bool(0.4)).collect() };
        let (ps, gs) = (pick(&mut rng), pick(&mut rng));
        let join = |s: &BTreeSet<&str>| s.iter().copied().collect::<Vec<_>>().join(", ");
        note("entity-f1", entity_f1(&join(&ps), &join(&gs), &lex), oracles::set_f1(&ps, &gs));
    }
    let mut names: Vec<_> = worst.into_iter().collect();
    names.sort_by(|a, b| a.0.cmp(b.0));
    for (k, err) in names {
        out.push(SubCheck::new(format!("500 random cases {k}"), err <= 1e-9, format!("max |diff| {err:.3e}")));
    }
    out
}

/// `medlogic all` on the toy corpus with the mock LLM reproduces the frozen
/// artifact tree byte for byte in under 30 s.
pub fn end_to_end_golden() -> Vec<SubCheck> {
    let mock = super::mock_llm::MockLlm::pipeline();
    let out = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let run = Pipeline::new(toy_config(out.path(), Some(&mock.url)), None).and_then(|p| p.run(Command::All));
    let secs = start.elapsed().as_secs_f64();
    if let Err(e) = run {
        return vec![SubCheck::new("run", false, e.one_line())];
    }
    let got = super::tree(out.path());
    let want = super::tree(&super::golden_dir().join("toy_all"));
    let mut checks = Vec::new();
    for (label, pred) in [
        ("lu jsonl", "lu_train.jsonl"),
        ("aqa jsonl", "aqa_"),
        ("logic-injected files", "logic/"),
        ("metric report", "report."),
        ("other artifacts", ""),
    ] {
        let keys: BTreeSet<&String> = want
            .keys()
            .chain(got.keys())
            .filter(|k| if pred.is_empty() { !["lu_train.jsonl", "aqa_", "logic/", "report."].iter().any(|p| k.starts_with(p)) } else { k.starts_with(pred) })
            .collect();
        let differing: Vec<&&String> = keys.iter().filter(|k| got.get(**k) != want.get(**k)).collect();
        checks.push(SubCheck::new(
            format!("{label} byte-identical"),
            !keys.is_empty() && differing.is_empty(),
            format!("{} files, differing: {differing:?}", keys.len()),
        ));
    }
    checks.push(SubCheck::new("runtime < 30 s", secs < 30.0, format!("{secs:.2} s")));
    checks
}

/// Random sample whose answer shares no token with its question or context.
pub fn fuzz_sample(rng: &mut impl Rng, i: usize) -> QaSample {
    const PROSE: &[&str] = &["the", "patient", "dose", "was", "reduced", "after", "trial", "\"quoted\"", "{braces}", "tab\there", "line\nbreak", "naïve", "β-blocker", "###", "Rules:", "=>", "&", "|"];
    const ANSWER: &[&str] = &["yes", "negative", "ÅNSWER", "zeta-7", "\\escaped\\", "«guillemets»", "emoji🙂", "42mg", "q.d.", "[bracket]"];
    let mut words = |pool: &[&str], lo: usize, hi: usize| -> String {
        let n = rng.random_range(lo..=hi);
        (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect::<Vec<_>>().join(" ")
    };
    QaSample {
        id: format!("fuzz-{i}"),
        question: words(PROSE, 1, 12),
        context: words(PROSE, 1, 40),
        answer: words(ANSWER, 1, 8),
        alternate_answers: Vec::new(),
        split: if i % 5 == 0 { Split::Test } else { Split::Train },
    }
}

/// No AQA record embeds its own answer: the toy corpus plus 1,000 fuzzed
/// samples. LU records must embed it, which shows the guard can fire.
pub fn leakage_guard() -> Vec<SubCheck> {
    let rules = builtin_rules();
    let mut checks = Vec::new();
    let toy = load_bioasq(&toy_dir().join("bioasq_toy.json"), &SplitSpec::default()).unwrap();
    let lex = Lexicon::parse(&std::fs::read_to_string(toy_dir().join("lexicon.tsv")).unwrap()).unwrap();
    let table = RelationTable::parse(&std::fs::read_to_string(toy_dir().join("relations.tsv")).unwrap()).unwrap();
    let toy_leaks: Vec<&str> = toy
        .iter()
        .filter(|s| leaks_answer(&emit_aqa_record(s, &rules)))
        .map(|s| s.id.as_str())
        .collect();
    checks.push(SubCheck::new("toy corpus", toy_leaks.is_empty(), format!("{} samples, leaking: {toy_leaks:?}", toy.len())));

    let mut rng = gen::rng(1000);
    let mut leaks = 0;
    let mut lu_hits = 0;
    for i in 0..1000 {
        let s = fuzz_sample(&mut rng, i);
        let aqa = emit_aqa_record(&s, &rules);
        if leaks_answer(&aqa) || aqa.input_text.contains(&s.answer) {
            leaks += 1;
        }
        let lig = infuse(&build_context_kg(&s.question, &s.context, &lex, &table, &s.id), &rules);
        if emit_lu_record(&s, &rules, &lig).input_text.contains(&s.answer) {
            lu_hits += 1;
        }
    }
    checks.push(SubCheck::new("1000 fuzzed samples", leaks == 0, format!("{leaks} leaking AQA records")));
    checks.push(SubCheck::new("guard sensitivity (LU embeds answer)", lu_hits == 1000, format!("{lu_hits}/1000")));
    checks
}

/// Published absolute scores are out of reach at desk scale; the check is that
/// the README states so.
pub fn non_reproducibility_note() -> Vec<SubCheck> {
    let readme = std::fs::read_to_string(super::repo_root().join("README.md")).unwrap_or_default();
    let stated = readme.contains("38.47") && readme.contains("0.2729") && readme.to_lowercase().contains("not reproduc");
    vec![SubCheck::new(
        "README states published scores are not reproduced",
        stated,
        if stated { "documented in README" } else { "statement missing from README" },
    )]
}

/// Convenience for tests that only care about a single fact set.
pub fn graph_of(triples: &[(&str, RelationKind, &str)]) -> medlogic::kg::KnowledgeGraph {
    build_graph(
        triples
            .iter()
            .map(|(h, r, t)| Triple::new(ConceptId::parse(h).unwrap(), *r, ConceptId::parse(t).unwrap())),
        "test",
    )
}

pub fn head_atoms(h: &RuleHead) -> Vec<RuleAtom> {
    h.atoms().to_vec()
}
