//! Deterministic synthetic corpora of C comment/code pairs.
//!
//! Useful comments explain intent, contracts and caveats of the function
//! below them. Not-useful comments restate names, mark TODOs, hold
//! commented-out code or carry bookkeeping. A configurable fraction of
//! labels is flipped so that no classifier can be perfect.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CodeCommentPair, Corpus, Label, Source};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub name: String,
    pub useful: usize,
    pub not_useful: usize,
    /// Probability that a pair's text is drawn from the opposite class.
    pub label_noise: f64,
    pub seed: u64,
    pub source: Source,
}

impl SynthConfig {
    pub fn new(name: impl Into<String>, useful: usize, not_useful: usize, seed: u64) -> Self {
        SynthConfig {
            name: name.into(),
            useful,
            not_useful,
            label_noise: 0.08,
            seed,
            source: Source::Seed,
        }
    }
}

const STEMS: [&str; 14] = [
    "buf", "node", "list", "str", "vec", "map", "cfg", "pkt", "req", "item", "queue", "tbl", "ring", "path",
];

struct Archetype {
    op: &'static str,
    params: &'static str,
    ret: &'static str,
    body: &'static [&'static str],
    purpose: &'static [&'static str],
    caveat: &'static [&'static str],
}

const ARCHETYPES: [Archetype; 12] = [
    Archetype {
        op: "clear",
        params: "int *{s}, size_t len",
        ret: "void",
        body: &["for (size_t i = 0; i < len; i++)", "    {s}[i] = 0;"],
        purpose: &[
            "Reset every element of {s} to zero so the storage can be reused",
            "Zero out the first len entries of the {s} array before the next pass",
        ],
        caveat: &["The caller keeps ownership of the memory", "Passing len larger than the array is undefined"],
    },
    Archetype {
        op: "find",
        params: "const int *{s}, size_t len, int key",
        ret: "long",
        body: &[
            "for (size_t i = 0; i < len; i++)",
            "    if ({s}[i] == key)",
            "        return (long)i;",
            "return -1;",
        ],
        purpose: &[
            "Return the index of the first {s} element equal to key, or -1 when it is absent",
            "Linear search through {s}; yields the position of key or -1",
        ],
        caveat: &["Runs in O(len) time, so prefer the hashed lookup for large tables", "Only the first match is reported"],
    },
    Archetype {
        op: "sum",
        params: "const double *{s}, size_t len",
        ret: "double",
        body: &["double total = 0.0;", "for (size_t i = 0; i < len; i++)", "    total += {s}[i];", "return total;"],
        purpose: &[
            "Compute the total of all {s} entries using a single accumulator",
            "Add up the len values stored in {s} and return the result",
        ],
        caveat: &["Large inputs may lose precision because no compensated summation is used", "Returns 0.0 for an empty range"],
    },
    Archetype {
        op: "copy",
        params: "char *dst, const char *{s}, size_t n",
        ret: "size_t",
        body: &[
            "size_t i = 0;",
            "while (i + 1 < n && {s}[i] != '\\0') {",
            "    dst[i] = {s}[i];",
            "    i++;",
            "}",
            "if (n > 0)",
            "    dst[i] = '\\0';",
            "return i;",
        ],
        purpose: &[
            "Copy at most n - 1 bytes of {s} into dst and always NUL-terminate the result",
            "Bounded string copy from {s}; returns the number of characters written",
        ],
        caveat: &["dst must hold at least n bytes", "Truncation is silent, so compare the return value with strlen if it matters"],
    },
    Archetype {
        op: "free",
        params: "struct {s} *head",
        ret: "void",
        body: &["while (head != NULL) {", "    struct {s} *next = head->next;", "    free(head);", "    head = next;", "}"],
        purpose: &[
            "Release every {s} node reachable from head",
            "Walk the {s} chain and free each node after saving its successor",
        ],
        caveat: &["Safe to call with NULL", "The payload pointers are not freed, only the nodes"],
    },
    Archetype {
        op: "max",
        params: "const int *{s}, size_t len",
        ret: "int",
        body: &["int best = {s}[0];", "for (size_t i = 1; i < len; i++)", "    if ({s}[i] > best)", "        best = {s}[i];", "return best;"],
        purpose: &[
            "Return the largest value stored in {s}",
            "Scan {s} once and keep the running maximum",
        ],
        caveat: &["len must be at least 1", "Ties resolve to the earliest element"],
    },
    Archetype {
        op: "swap",
        params: "int *a, int *b",
        ret: "void",
        body: &["int temp = *a;", "*a = *b;", "*b = temp;"],
        purpose: &[
            "Exchange the two {s} values pointed to by a and b",
            "Swap the integers behind a and b through a temporary",
        ],
        caveat: &["Both pointers must be valid and may alias", "No overflow is possible because no arithmetic is used"],
    },
    Archetype {
        op: "count",
        params: "const int *{s}, size_t len, int limit",
        ret: "size_t",
        body: &["size_t n = 0;", "for (size_t i = 0; i < len; i++)", "    if ({s}[i] > limit)", "        n++;", "return n;"],
        purpose: &[
            "Count how many {s} entries exceed limit",
            "Return the number of values in {s} strictly greater than limit",
        ],
        caveat: &["Equal values are not counted", "The input is not modified"],
    },
    Archetype {
        op: "init",
        params: "size_t cap",
        ret: "struct {s} *",
        body: &[
            "struct {s} *p = malloc(sizeof *p);",
            "if (p == NULL)",
            "    return NULL;",
            "p->data = calloc(cap, sizeof *p->data);",
            "p->cap = cap;",
            "return p;",
        ],
        purpose: &[
            "Allocate a new {s} with room for cap elements",
            "Create and zero-initialize a {s} whose capacity is cap",
        ],
        caveat: &["Returns NULL when the allocation fails", "Release the result with the matching free routine"],
    },
    Archetype {
        op: "hash",
        params: "const char *{s}",
        ret: "unsigned long",
        body: &[
            "unsigned long h = 2166136261UL;",
            "while (*{s})",
            "    h = (h ^ (unsigned char)*{s}++) * 16777619UL;",
            "return h;",
        ],
        purpose: &[
            "Hash the {s} key with FNV-1a so lookups spread evenly across buckets",
            "Compute a 32-bit FNV-1a digest of the NUL-terminated {s}",
        ],
        caveat: &["Not suitable for untrusted input because collisions are easy to force", "The constants are the published FNV offset basis and prime"],
    },
    Archetype {
        op: "reverse",
        params: "int *{s}, size_t len",
        ret: "void",
        body: &[
            "for (size_t i = 0, j = len; i + 1 < j; i++, j--) {",
            "    int t = {s}[i];",
            "    {s}[i] = {s}[j - 1];",
            "    {s}[j - 1] = t;",
            "}",
        ],
        purpose: &[
            "Reverse the order of the {s} elements in place",
            "Mirror {s} so the last element becomes the first",
        ],
        caveat: &["Works for empty and single-element ranges", "No extra memory is allocated"],
    },
    Archetype {
        op: "parse",
        params: "const char *{s}, long *out",
        ret: "int",
        body: &[
            "char *end;",
            "errno = 0;",
            "long v = strtol({s}, &end, 10);",
            "if (errno != 0 || end == {s} || *end != '\\0')",
            "    return -1;",
            "*out = v;",
            "return 0;",
        ],
        purpose: &[
            "Parse a decimal integer from {s} into out",
            "Convert the text in {s} to a long, rejecting trailing garbage",
        ],
        caveat: &["Returns 0 on success and -1 on malformed or out-of-range input", "out is left untouched on failure"],
    },
];

const AUTHORS: [&str; 6] = ["jdoe", "mk", "alice", "rpatel", "tom", "lw"];

fn fill(template: &str, stem: &str) -> String {
    template.replace("{s}", stem)
}

fn function_code(a: &Archetype, stem: &str, name: &str) -> String {
    let mut code = format!("{} {}({})\n{{\n", fill(a.ret, stem), name, fill(a.params, stem));
    for line in a.body {
        code.push_str("    ");
        code.push_str(&fill(line, stem));
        code.push('\n');
    }
    code.push('}');
    code
}

fn useful_comment(rng: &mut ChaCha8Rng, a: &Archetype, stem: &str) -> String {
    let purpose = fill(a.purpose.choose(rng).expect("non-empty"), stem);
    let caveat = a.caveat.choose(rng).expect("non-empty");
    match rng.random_range(0..4) {
        0 => format!("/* {purpose}. */"),
        1 => format!("/* {purpose}.\n * {caveat}.\n */"),
        2 => format!("// {purpose}.\n// {caveat}."),
        _ => format!("/**\n * {purpose}.\n *\n * {caveat}.\n */"),
    }
}

fn useless_comment(rng: &mut ChaCha8Rng, a: &Archetype, stem: &str, name: &str) -> String {
    let author = AUTHORS.choose(rng).expect("non-empty");
    match rng.random_range(0..12) {
        0 => format!("/* {name} */"),
        1 => format!("// {} function", a.op),
        2 => "// TODO".to_string(),
        3 => format!("/* FIXME: {stem} */"),
        4 => format!("// {stem}[i] = 0;"),
        5 => "/* printf(\"here\\n\"); */".to_string(),
        6 => "/******************************/".to_string(),
        7 => "// ---------------------------".to_string(),
        8 => format!("// added by {author} {}", rng.random_range(2003..2021)),
        9 => format!("/* modified {:02}/{} */", rng.random_range(1..13), rng.random_range(2003..2021)),
        10 => "// hack, do not touch".to_string(),
        _ => format!("/* {} the {stem} */", a.op),
    }
}

/// Builds a corpus with exactly `useful` Useful and `not_useful` NotUseful
/// pairs, in shuffled order, with content-hash ids.
pub fn synthesize(config: &SynthConfig) -> Result<Corpus> {
    if !(0.0..=0.5).contains(&config.label_noise) {
        return Err(Error::Config("label_noise must lie in [0, 0.5]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Useful, config.useful)
        .chain(std::iter::repeat_n(Label::NotUseful, config.not_useful))
        .collect();
    labels.shuffle(&mut rng);
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(labels.len());
    for label in labels {
        let flip = rng.random_bool(config.label_noise);
        let looks_useful = (label == Label::Useful) != flip;
        let mut attempts = 0;
        loop {
            let a = ARCHETYPES.choose(&mut rng).expect("non-empty");
            let stem = STEMS.choose(&mut rng).expect("non-empty");
            let name = match rng.random_range(0..3) {
                0 => format!("{stem}_{}", a.op),
                1 => format!("{}_{stem}", a.op),
                _ => format!("{stem}_{}_{}", a.op, rng.random_range(2..100)),
            };
            let code = function_code(a, stem, &name);
            let comment = if looks_useful {
                useful_comment(&mut rng, a, stem)
            } else {
                useless_comment(&mut rng, a, stem, &name)
            };
            let mut pair = CodeCommentPair::new(comment, code, label, config.source);
            if seen.insert(pair.id.clone()) {
                pairs.push(pair);
                break;
            }
            attempts += 1;
            if attempts > 1000 {
                // The template space is exhausted; disambiguate by suffix.
                pair.code.push_str(&format!("\n/* {} */", pairs.len()));
                pair = CodeCommentPair::new(pair.comment, pair.code, label, config.source);
                seen.insert(pair.id.clone());
                pairs.push(pair);
                break;
            }
        }
    }
    Corpus::new(config.name.clone(), pairs)
}

/// The 2000-pair seed corpus shipped in `data/synthetic/seed.jsonl`.
pub fn bundled_seed() -> Result<Corpus> {
    synthesize(&SynthConfig::new("seed", 1200, 800, 1))
}

/// The 300 labeled generated pairs shipped in `data/synthetic/generated.jsonl`.
pub fn bundled_generated() -> Result<Corpus> {
    synthesize(&SynthConfig {
        source: Source::Generated,
        ..SynthConfig::new("generated", 180, 120, 2)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_counts_and_determinism() {
        let config = SynthConfig::new("s", 30, 20, 3);
        let a = synthesize(&config).unwrap();
        let counts = a.label_counts();
        assert_eq!((counts.useful, counts.not_useful), (30, 20));
        assert_eq!(a, synthesize(&config).unwrap());
        assert_ne!(a, synthesize(&SynthConfig::new("s", 30, 20, 4)).unwrap());
    }

    #[test]
    fn generated_source_is_kept() {
        let config = SynthConfig {
            source: Source::Generated,
            ..SynthConfig::new("g", 3, 2, 1)
        };
        assert!(synthesize(&config).unwrap().pairs().iter().all(|p| p.source == Source::Generated));
    }
}
