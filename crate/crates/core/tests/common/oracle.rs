//! Brute-force PARENT reference used only by tests. It shares no code with the
//! library: n-grams are enumerated position by position, counts come from
//! linear scans and the longest common subsequence is found by trying every
//! subsequence of the shorter side.

pub const FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct OracleScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub struct OracleRecord {
    pub attribute: Vec<String>,
    pub value: Vec<String>,
}

fn grams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    if tokens.len() < n {
        return out;
    }
    for start in 0..=tokens.len() - n {
        let mut g = Vec::new();
        for k in 0..n {
            g.push(tokens[start + k].clone());
        }
        out.push(g);
    }
    out
}

fn occurrences(list: &[Vec<String>], gram: &[String]) -> usize {
    let mut c = 0;
    for g in list {
        if g.as_slice() == gram {
            c += 1;
        }
    }
    c
}

fn distinct(list: &[Vec<String>]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    for g in list {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out
}

fn in_table(token: &str, table: &[OracleRecord]) -> bool {
    for record in table {
        for t in record.attribute.iter().chain(record.value.iter()) {
            if t == token {
                return true;
            }
        }
    }
    false
}

fn entail(gram: &[String], table: &[OracleRecord]) -> f64 {
    let mut hits = 0.0;
    for t in gram {
        if in_table(t, table) {
            hits += 1.0;
        }
    }
    hits / gram.len() as f64
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut i = 0;
    for t in hay {
        if i < needle.len() && needle[i] == t {
            i += 1;
        }
    }
    i == needle.len()
}

/// Longest common subsequence by exhaustive search over subsets of `a`.
pub fn brute_lcs(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16, "brute-force lcs is exponential");
    let mut best = 0;
    for mask in 0u32..(1u32 << a.len()) {
        let pick: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if pick.len() > best && is_subsequence(&pick, b) {
            best = pick.len();
        }
    }
    best
}

fn clamp(p: f64) -> f64 {
    if p < FLOOR {
        FLOOR
    } else if p > 1.0 {
        1.0
    } else {
        p
    }
}

fn geo(values: &[f64]) -> f64 {
    let mut product = 1.0;
    for v in values {
        product *= clamp(*v);
    }
    product.powf(1.0 / values.len() as f64)
}

pub fn oracle_score(
    hyp: &[String],
    reference: &[String],
    table: &[OracleRecord],
    lambda: f64,
    max_n: usize,
) -> OracleScore {
    if hyp.is_empty() || reference.is_empty() {
        return OracleScore {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    let top = if max_n < hyp.len() { max_n } else { hyp.len() };
    for n in 1..=top {
        let hg = grams(hyp, n);
        let rg = grams(reference, n);

        let mut num = 0.0;
        let mut den = 0.0;
        for g in distinct(&hg) {
            let ch = occurrences(&hg, &g);
            let cr = occurrences(&rg, &g);
            let m = if ch < cr { ch } else { cr };
            num += m as f64 + (ch - m) as f64 * entail(&g, table);
            den += ch as f64;
        }
        precisions.push(num / den);

        let mut rnum = 0.0;
        let mut rden = 0.0;
        for g in distinct(&rg) {
            let ch = occurrences(&hg, &g);
            let cr = occurrences(&rg, &g);
            let m = if ch < cr { ch } else { cr };
            let w = entail(&g, table);
            rnum += w * m as f64;
            rden += w * cr as f64;
        }
        recalls.push(if rden == 0.0 { 1.0 } else { rnum / rden });
    }
    let precision = geo(&precisions);
    let ref_recall = geo(&recalls);

    let mut table_recall = 0.0;
    for record in table {
        table_recall += brute_lcs(&record.value, hyp) as f64 / record.value.len() as f64;
    }
    table_recall /= table.len() as f64;

    let recall = ref_recall.powf(lambda) * clamp(table_recall).powf(1.0 - lambda);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    OracleScore {
        precision,
        recall,
        f1,
    }
}
