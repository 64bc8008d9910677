//! Deterministic synthetic corpus of Java methods with template
//! Javadoc summaries. Summaries mention the method-name subtokens and
//! the composite-statement kinds in source order, so they are learnable
//! from both the code tokens and the tree structure.

use rand::distributions::{Distribution, WeightedIndex};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::dataset::CorpusRecord;
use crate::tree::CompositeKind;

const VERBS: [(&str, &str); 14] = [
    ("get", "gets"),
    ("compute", "computes"),
    ("count", "counts"),
    ("find", "finds"),
    ("build", "builds"),
    ("check", "checks"),
    ("update", "updates"),
    ("merge", "merges"),
    ("load", "loads"),
    ("filter", "filters"),
    ("scan", "scans"),
    ("copy", "copies"),
    ("apply", "applies"),
    ("trace", "traces"),
];

const NOUNS: [&str; 22] = [
    "item", "value", "column", "row", "index", "table", "node", "total", "buffer", "entry",
    "key", "record", "field", "limit", "offset", "token", "label", "score", "width", "depth",
    "cache", "slot",
];

const COMPOSITE_WEIGHTS: [(CompositeKind, u32); 9] = [
    (CompositeKind::For, 28),
    (CompositeKind::If, 26),
    (CompositeKind::While, 16),
    (CompositeKind::Switch, 8),
    (CompositeKind::Try, 8),
    (CompositeKind::DoWhile, 5),
    (CompositeKind::SynchBlock, 4),
    (CompositeKind::TryWith, 3),
    (CompositeKind::Label, 2),
];

struct CompositePlan {
    kind: CompositeKind,
    noun: &'static str,
    nested: Option<Box<CompositePlan>>,
}

struct MethodPlan {
    verb_idx: usize,
    noun1: &'static str,
    noun2: &'static str,
    param_noun: &'static str,
    ret_int: bool,
    decl_nouns: Vec<&'static str>,
    composites: Vec<CompositePlan>,
}

/// Deterministic stream of `(source, javadoc)` pairs; the source does
/// not include the Javadoc block.
pub fn generate_corpus(seed: u64, n: usize) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let plan = sample_plan(&mut rng);
            (render_code(&plan), render_javadoc(&plan))
        })
        .collect()
}

/// Corpus records with the Javadoc embedded ahead of the method, so
/// preprocessing exercises summary extraction.
pub fn generate_records(seed: u64, n: usize) -> Vec<CorpusRecord> {
    generate_corpus(seed, n)
        .into_iter()
        .enumerate()
        .map(|(i, (source, javadoc))| CorpusRecord {
            id: format!("m{i:05}"),
            code: format!("{javadoc}\n{source}"),
            summary: None,
        })
        .collect()
}

fn sample_plan(rng: &mut ChaCha8Rng) -> MethodPlan {
    let verb_idx = rng.gen_range(0..VERBS.len());
    let noun1 = NOUNS[rng.gen_range(0..NOUNS.len())];
    let noun2 = loop {
        let n = NOUNS[rng.gen_range(0..NOUNS.len())];
        if n != noun1 {
            break n;
        }
    };
    let param_noun = NOUNS[rng.gen_range(0..NOUNS.len())];
    let ret_int = rng.gen_bool(0.8);
    let decl_count = rng.gen_range(1..=3);
    let decl_nouns = (0..decl_count)
        .map(|_| NOUNS[rng.gen_range(0..NOUNS.len())])
        .collect();

    let weights = WeightedIndex::new(COMPOSITE_WEIGHTS.iter().map(|(_, w)| *w)).unwrap();
    let top_count = *[0usize, 1, 1, 1, 1, 2, 2, 2]
        .get(rng.gen_range(0..8))
        .unwrap();
    let composites = (0..top_count)
        .map(|_| sample_composite(rng, &weights, 0))
        .collect();

    MethodPlan {
        verb_idx,
        noun1,
        noun2,
        param_noun,
        ret_int,
        decl_nouns,
        composites,
    }
}

fn sample_composite(
    rng: &mut ChaCha8Rng,
    weights: &WeightedIndex<u32>,
    depth: usize,
) -> CompositePlan {
    let kind = COMPOSITE_WEIGHTS[weights.sample(rng)].0;
    let noun = NOUNS[rng.gen_range(0..NOUNS.len())];
    let nest_prob = match depth {
        0 => 0.5,
        1 => 0.25,
        _ => 0.0,
    };
    let nested = if rng.gen_bool(nest_prob) {
        Some(Box::new(sample_composite(rng, weights, depth + 1)))
    } else {
        None
    };
    CompositePlan { kind, noun, nested }
}

fn cap(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn render_javadoc(plan: &MethodPlan) -> String {
    format!("/** {}. */", cap(&render_summary_sentence(plan)))
}

/// Reference summary as one lowercase sentence without the final dot.
fn render_summary_sentence(plan: &MethodPlan) -> String {
    let mut parts = vec![
        VERBS[plan.verb_idx].1.to_string(),
        "the".into(),
        plan.noun1.into(),
        plan.noun2.into(),
    ];
    for composite in &plan.composites {
        push_phrases(&mut parts, composite);
    }
    parts.join(" ")
}

fn push_phrases(parts: &mut Vec<String>, plan: &CompositePlan) {
    let phrase = match plan.kind {
        CompositeKind::For => format!("for each {} step", plan.noun),
        CompositeKind::If => format!("when the {} matches", plan.noun),
        CompositeKind::While => format!("while the {} remains", plan.noun),
        CompositeKind::Switch => format!("depending on the {} kind", plan.noun),
        CompositeKind::Try => format!("guarding the {} access", plan.noun),
        CompositeKind::DoWhile => format!("until the {} settles", plan.noun),
        CompositeKind::SynchBlock => format!("holding the {} lock", plan.noun),
        CompositeKind::TryWith => format!("releasing the {} handle", plan.noun),
        CompositeKind::Label => format!("marking the {} pass", plan.noun),
    };
    parts.push(phrase);
    if let Some(nested) = &plan.nested {
        push_phrases(parts, nested);
    }
}

fn render_code(plan: &MethodPlan) -> String {
    let verb = VERBS[plan.verb_idx].0;
    let name = format!("{verb}{}{}", cap(plan.noun1), cap(plan.noun2));
    let ret = if plan.ret_int { "int" } else { "void" };
    let param = format!("int {}Count", plan.param_noun);

    let mut body = String::new();
    let mut vars: Vec<String> = vec![format!("{}Count", plan.param_noun)];
    for (i, noun) in plan.decl_nouns.iter().enumerate() {
        let var = format!("{noun}Total");
        body.push_str(&format!("    int {var} = {};\n", i + 1));
        vars.push(var);
    }
    for composite in &plan.composites {
        render_composite(&mut body, composite, &mut vars, 1, 0);
    }
    if plan.ret_int {
        body.push_str(&format!("    return {};\n", vars.last().unwrap()));
    } else {
        body.push_str("    return;\n");
    }

    format!("public {ret} {name}({param}) {{\n{body}}}")
}

fn indent(level: usize) -> String {
    "    ".repeat(level)
}

fn simple_stmt(vars: &[String], salt: usize) -> String {
    let var = &vars[salt % vars.len()];
    match salt % 3 {
        0 => format!("{var} = {var} + 1;"),
        1 => format!("{var} = {var} * 2;"),
        _ => format!("track({var});"),
    }
}

fn render_composite(
    out: &mut String,
    plan: &CompositePlan,
    vars: &mut Vec<String>,
    level: usize,
    salt: usize,
) {
    let pad = indent(level);
    let inner = indent(level + 1);
    let noun = plan.noun;
    let guard = vars[salt % vars.len()].clone();
    let open = |out: &mut String, header: String| {
        out.push_str(&pad);
        out.push_str(&header);
        out.push('\n');
    };
    let body = |out: &mut String, vars: &mut Vec<String>, level: usize| {
        out.push_str(&indent(level));
        out.push_str(&simple_stmt(vars, salt + 1));
        out.push('\n');
        if let Some(nested) = &plan.nested {
            render_composite(out, nested, vars, level, salt + 2);
        }
        out.push_str(&indent(level));
        out.push_str(&simple_stmt(vars, salt + 2));
        out.push('\n');
    };
    match plan.kind {
        CompositeKind::For => {
            let iv = format!("{noun}Index");
            vars.push(iv.clone());
            open(out, format!("for (int {iv} = 0; {iv} < {guard}; {iv}++) {{"));
            body(out, vars, level + 1);
            out.push_str(&format!("{pad}}}\n"));
        }
        CompositeKind::If => {
            open(out, format!("if ({guard} > {}) {{", salt % 4));
            body(out, vars, level + 1);
            out.push_str(&format!("{pad}}} else {{\n"));
            out.push_str(&format!("{inner}{}\n", simple_stmt(vars, salt + 3)));
            out.push_str(&format!("{pad}}}\n"));
        }
        CompositeKind::While => {
            let wv = format!("{noun}Left");
            vars.push(wv.clone());
            out.push_str(&format!("{pad}int {wv} = {guard};\n"));
            open(out, format!("while ({wv} > 0) {{"));
            out.push_str(&format!("{inner}{wv} = {wv} - 1;\n"));
            body(out, vars, level + 1);
            out.push_str(&format!("{pad}}}\n"));
        }
        CompositeKind::Switch => {
            open(out, format!("switch ({guard}) {{"));
            out.push_str(&format!("{inner}case 0:\n"));
            out.push_str(&format!("{}{}\n", indent(level + 2), simple_stmt(vars, salt + 1)));
            out.push_str(&format!("{}break;\n", indent(level + 2)));
            out.push_str(&format!("{inner}default:\n"));
            if let Some(nested) = &plan.nested {
                render_composite(out, nested, vars, level + 2, salt + 2);
            }
            out.push_str(&format!("{}{}\n", indent(level + 2), simple_stmt(vars, salt + 3)));
            out.push_str(&format!("{pad}}}\n"));
        }
        CompositeKind::Try => {
            open(out, "try {".to_string());
            body(out, vars, level + 1);
            out.push_str(&format!("{pad}}} catch (Exception {noun}Err) {{\n"));
            out.push_str(&format!("{inner}{}\n", simple_stmt(vars, salt + 3)));
            out.push_str(&format!("{pad}}}\n"));
        }
        CompositeKind::DoWhile => {
            let dv = format!("{noun}Round");
            vars.push(dv.clone());
            out.push_str(&format!("{pad}int {dv} = {guard};\n"));
            open(out, "do {".to_string());
            out.push_str(&format!("{inner}{dv} = {dv} - 1;\n"));
            body(out, vars, level + 1);
            out.push_str(&format!("{pad}}} while ({dv} > 0);\n"));
        }
        CompositeKind::SynchBlock => {
            open(out, "synchronized (this) {".to_string());
            body(out, vars, level + 1);
            out.push_str(&format!("{pad}}}\n"));
        }
        CompositeKind::TryWith => {
            open(
                out,
                format!("try (Closeable {noun}Handle = open{}()) {{", cap(noun)),
            );
            body(out, vars, level + 1);
            out.push_str(&format!("{pad}}} catch (Exception {noun}Err) {{\n"));
            out.push_str(&format!("{inner}{}\n", simple_stmt(vars, salt + 3)));
            out.push_str(&format!("{pad}}}\n"));
        }
        CompositeKind::Label => {
            open(out, format!("{noun}Mark: {{"));
            body(out, vars, level + 1);
            out.push_str(&format!("{pad}}}\n"));
        }
    }
}

/// A method whose body is a chain of `k` nested `if` statements with a
/// fixed-shape innermost body, for depth-scaling measurements.
pub fn nested_method(k: usize) -> String {
    assert!(k >= 1);
    let mut body = String::new();
    for i in 0..k {
        body.push_str(&indent(i + 1));
        body.push_str(&format!("if (a > {i}) {{\n"));
    }
    body.push_str(&indent(k + 1));
    body.push_str("a = a + 1;\n");
    for i in (0..k).rev() {
        body.push_str(&indent(i + 1));
        body.push_str("}\n");
    }
    format!("int probeDepth(int a) {{\n{body}    return a;\n}}")
}

const SYLLABLES: [&str; 12] = [
    "zor", "ble", "mak", "tur", "vin", "qua", "fex", "lom", "dri", "sep", "gav", "nux",
];

/// Name of the per-example rare identifier used by
/// [`rare_identifier_corpus`]; distinct for every index below 144.
pub fn rare_word(i: usize) -> String {
    format!("{}{}", SYLLABLES[i % 12], SYLLABLES[(i / 12) % 12])
}

/// Corpus in which every summary contains one identifier subtoken
/// unique to its example. With a small summary-vocabulary cap those
/// subtokens fall out of vocabulary and are only reachable by copying
/// them from the code.
pub fn rare_identifier_corpus(n: usize) -> Vec<CorpusRecord> {
    (0..n)
        .map(|i| {
            let rare = rare_word(i);
            let code = format!(
                "/** Returns the {rare} total for the request. */\n\
                 int get{}Total(int seed) {{\n    int {rare}Count = seed + {i};\n    \
                 return {rare}Count * 2;\n}}",
                cap(&rare)
            );
            CorpusRecord {
                id: format!("r{i:04}"),
                code,
                summary: None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;
    use crate::splitter::split;
    use crate::tree::NodeClass;

    #[test]
    fn corpus_is_deterministic() {
        let a = generate_corpus(7, 50);
        let b = generate_corpus(7, 50);
        assert_eq!(a, b);
        let c = generate_corpus(8, 50);
        assert_ne!(a, c);
    }

    #[test]
    fn every_generated_method_parses_and_splits() {
        for seed in 1..=5 {
            for (i, record) in generate_records(seed, 100).iter().enumerate() {
                let parsed = parse_source(&record.code)
                    .unwrap_or_else(|e| panic!("seed {seed} method {i}: {e}\n{}", record.code));
                assert!(parsed.javadoc.is_some(), "seed {seed} method {i} lost javadoc");
                split(&parsed.ast);
            }
        }
    }

    #[test]
    fn at_least_thirty_percent_have_nested_composites() {
        let records = generate_records(7, 100);
        let nested = records
            .iter()
            .filter(|r| {
                let ast = parse_source(&r.code).unwrap().ast;
                // A composite node with a composite descendant.
                ast.nodes().iter().enumerate().any(|(id, n)| {
                    n.class == NodeClass::CompositeStmt
                        && descendants_have_composite(&ast, id)
                })
            })
            .count();
        assert!(nested >= 30, "only {nested}/100 nested");
    }

    fn descendants_have_composite(tree: &crate::tree::Tree, id: usize) -> bool {
        tree.node(id).children.iter().any(|&c| {
            tree.node(c).class == NodeClass::CompositeStmt || descendants_have_composite(tree, c)
        })
    }

    #[test]
    fn nested_method_parses_for_all_k() {
        for k in [1, 2, 4, 6, 8, 10] {
            let src = nested_method(k);
            let ast = parse_source(&src).unwrap().ast;
            split(&ast);
        }
    }

    #[test]
    fn rare_corpus_words_are_unique_and_parse() {
        let records = rare_identifier_corpus(16);
        let mut words: Vec<String> = (0..16).map(rare_word).collect();
        words.sort();
        words.dedup();
        assert_eq!(words.len(), 16);
        for r in &records {
            parse_source(&r.code).unwrap();
        }
    }
}
