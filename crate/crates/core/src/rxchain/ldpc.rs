//! Binary LDPC codes: alist I/O, systematic-free GF(2) encoding and
//! sum-product belief propagation.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{input_err, Error, Result};

/// Sparse parity-check matrix with both adjacency views.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCheckCode {
    n: usize,
    checks: Vec<Vec<usize>>,
    vars: Vec<Vec<usize>>,
}

impl ParityCheckCode {
    /// Builds the code from the variable list of every check.
    pub fn from_checks(n: usize, checks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 || checks.is_empty() {
            return input_err("parity-check matrix is empty");
        }
        let mut vars = vec![Vec::new(); n];
        for (c, row) in checks.iter().enumerate() {
            let mut seen = HashSet::new();
            for &v in row {
                if v >= n {
                    return input_err(format!("check {c} references bit {v} >= n = {n}"));
                }
                if !seen.insert(v) {
                    return input_err(format!("check {c} lists bit {v} twice"));
                }
                vars[v].push(c);
            }
        }
        Ok(Self { n, checks, vars })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.checks.len()
    }

    /// `1 - m/n`; equals the true rate when `H` has full row rank.
    pub fn design_rate(&self) -> f64 {
        1.0 - self.m() as f64 / self.n as f64
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    pub fn edges(&self) -> usize {
        self.checks.iter().map(Vec::len).sum()
    }

    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        self.checks
            .iter()
            .all(|row| row.iter().fold(0u8, |a, &v| a ^ bits[v]) == 0)
    }

    /// Number of length-4 cycles (pairs of checks sharing two bits).
    pub fn four_cycles(&self) -> usize {
        let mut pairs = HashSet::new();
        let mut count = 0;
        for col in &self.vars {
            for (i, &a) in col.iter().enumerate() {
                for &b in &col[i + 1..] {
                    if !pairs.insert((a.min(b), a.max(b))) {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    pub fn parse_alist(text: &str, source_name: &str) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            message: format!("line {line}: {message}"),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut numbers = |want: Option<usize>, what: &str| -> Result<(usize, Vec<usize>)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| perr(0, format!("unexpected end of file reading {what}")))?;
            let v = line
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| perr(no, format!("bad integer '{t}' in {what}"))))
                .collect::<Result<Vec<_>>>()?;
            if let Some(w) = want {
                if v.len() < w {
                    return Err(perr(no, format!("{what}: expected {w} values, found {}", v.len())));
                }
            }
            Ok((no, v))
        };
        let (no, dims) = numbers(Some(2), "dimensions")?;
        let (n, m) = (dims[0], dims[1]);
        if n == 0 || m == 0 {
            return Err(perr(no, "dimensions must be positive".into()));
        }
        numbers(Some(2), "maximum degrees")?;
        let (_, col_deg) = numbers(Some(n), "column degrees")?;
        let (_, row_deg) = numbers(Some(m), "row degrees")?;
        for j in 0..n {
            let (no, v) = numbers(None, "column list")?;
            let nz: Vec<_> = v.into_iter().filter(|&x| x != 0).collect();
            if nz.len() != col_deg[j] {
                return Err(perr(no, format!("column {} lists {} checks, degree says {}", j + 1, nz.len(), col_deg[j])));
            }
        }
        let mut checks = Vec::with_capacity(m);
        for i in 0..m {
            let (no, v) = numbers(None, "row list")?;
            let nz: Vec<usize> = v.into_iter().filter(|&x| x != 0).map(|x| x - 1).collect();
            if nz.len() != row_deg[i] {
                return Err(perr(no, format!("row {} lists {} bits, degree says {}", i + 1, nz.len(), row_deg[i])));
            }
            checks.push(nz);
        }
        let code = Self::from_checks(n, checks).map_err(|e| perr(0, e.to_string()))?;
        for (j, col) in code.vars.iter().enumerate() {
            if col.len() != col_deg[j] {
                return Err(perr(0, format!("column {} disagrees with the row lists", j + 1)));
            }
        }
        Ok(code)
    }

    pub fn load_alist(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_alist(&text, &path.display().to_string())
    }

    pub fn to_alist(&self) -> String {
        let mut s = String::new();
        let maxc = self.vars.iter().map(Vec::len).max().unwrap_or(0);
        let maxr = self.checks.iter().map(Vec::len).max().unwrap_or(0);
        let join = |v: &mut dyn Iterator<Item = usize>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "{} {}", self.n, self.m()).unwrap();
        writeln!(s, "{maxc} {maxr}").unwrap();
        writeln!(s, "{}", join(&mut self.vars.iter().map(Vec::len))).unwrap();
        writeln!(s, "{}", join(&mut self.checks.iter().map(Vec::len))).unwrap();
        for col in &self.vars {
            writeln!(s, "{}", join(&mut col.iter().map(|c| c + 1))).unwrap();
        }
        for row in &self.checks {
            writeln!(s, "{}", join(&mut row.iter().map(|v| v + 1))).unwrap();
        }
        s
    }
}

/// Repeat-accumulate style code: random weight-`dv` information columns
/// followed by a dual-diagonal parity part, built without 4-cycles.
pub fn ira_code(n: usize, k: usize, dv: usize, seed: u64) -> Result<ParityCheckCode> {
    if k == 0 || k >= n {
        return input_err(format!("need 0 < k < n, got k = {k}, n = {n}"));
    }
    let m = n - k;
    if dv == 0 || dv > m {
        return input_err("information column weight out of range");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut pairs: HashSet<(usize, usize)> = (0..m - 1).map(|r| (r, r + 1)).collect();
    for j in 0..k {
        let mut rows: Vec<usize> = Vec::with_capacity(dv);
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        order.sort_by_key(|&r| checks[r].len());
        for &r in &order {
            if rows.len() == dv {
                break;
            }
            if rows.iter().all(|&q| !pairs.contains(&(q.min(r), q.max(r)))) {
                rows.push(r);
            }
        }
        if rows.len() < dv {
            // fall back to any unused rows; a rare 4-cycle beats a failed build
            for r in 0..m {
                if rows.len() == dv {
                    break;
                }
                if !rows.contains(&r) && rng.random_bool(0.5) {
                    rows.push(r);
                }
            }
        }
        for (i, &a) in rows.iter().enumerate() {
            for &b in &rows[i + 1..] {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
        for &r in &rows {
            checks[r].push(j);
        }
    }
    for r in 0..m {
        if r > 0 {
            checks[r].push(k + r - 1);
        }
        checks[r].push(k + r);
    }
    for row in &mut checks {
        row.sort_unstable();
    }
    ParityCheckCode::from_checks(n, checks)
}

/// Generic encoder from the reduced row echelon form of `H` over GF(2).
/// Information bits occupy the non-pivot columns.
#[derive(Clone, Debug)]
pub struct Encoder {
    n: usize,
    words: usize,
    /// Reduced rows restricted to free columns, one per pivot.
    rows: Vec<(usize, Vec<u64>)>,
    free: Vec<usize>,
}

impl Encoder {
    pub fn new(code: &ParityCheckCode) -> Self {
        let n = code.n();
        let words = n.div_ceil(64);
        let mut mat: Vec<Vec<u64>> = code
            .checks()
            .iter()
            .map(|row| {
                let mut b = vec![0u64; words];
                for &v in row {
                    b[v / 64] |= 1 << (v % 64);
                }
                b
            })
            .collect();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..n {
            if r == mat.len() {
                break;
            }
            let (w, bit) = (c / 64, 1u64 << (c % 64));
            let Some(p) = (r..mat.len()).find(|&i| mat[i][w] & bit != 0) else {
                continue;
            };
            mat.swap(r, p);
            let pivot = mat[r].clone();
            for (i, row) in mat.iter_mut().enumerate() {
                if i != r && row[w] & bit != 0 {
                    row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
                }
            }
            pivots.push(c);
            r += 1;
        }
        let pivot_set: HashSet<usize> = pivots.iter().copied().collect();
        let free: Vec<usize> = (0..n).filter(|c| !pivot_set.contains(c)).collect();
        let mut free_mask = vec![0u64; words];
        for &c in &free {
            free_mask[c / 64] |= 1 << (c % 64);
        }
        let rows = pivots
            .iter()
            .zip(mat)
            .map(|(&p, row)| (p, row.iter().zip(&free_mask).map(|(a, m)| a & m).collect()))
            .collect();
        Self { n, words, rows, free }
    }

    /// Code dimension `k = n - rank(H)`.
    pub fn k(&self) -> usize {
        self.free.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.free
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k() {
            return input_err(format!("expected {} information bits, got {}", self.k(), info.len()));
        }
        let mut cw = vec![0u8; self.n];
        let mut packed = vec![0u64; self.words];
        for (&pos, &b) in self.free.iter().zip(info) {
            cw[pos] = b & 1;
            if b & 1 == 1 {
                packed[pos / 64] |= 1 << (pos % 64);
            }
        }
        for (p, row) in &self.rows {
            let ones: u32 = row.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            cw[*p] = (ones & 1) as u8;
        }
        Ok(cw)
    }

    pub fn extract(&self, codeword: &[u8]) -> Vec<u8> {
        self.free.iter().map(|&p| codeword[p]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BpOutcome {
    pub bits: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

const LLR_CLIP: f64 = 30.0;

/// Tanner graph edges in check-major order.
struct Edges {
    offsets: Vec<usize>,
    var: Vec<usize>,
}

impl Edges {
    fn new(code: &ParityCheckCode) -> Self {
        let mut offsets = vec![0];
        for row in code.checks() {
            offsets.push(offsets.last().unwrap() + row.len());
        }
        Self {
            offsets,
            var: code.checks().iter().flatten().copied().collect(),
        }
    }
}

/// One flooding check-node update: new `c2v` from the current posteriors.
fn check_pass(edges: &Edges, post: &[f64], c2v: &mut [f64], t: &mut Vec<f64>, excl: &mut Vec<f64>) {
    for c in 0..edges.offsets.len() - 1 {
        let (a, b) = (edges.offsets[c], edges.offsets[c + 1]);
        t.clear();
        for e in a..b {
            let v2c = (post[edges.var[e]] - c2v[e]).clamp(-LLR_CLIP, LLR_CLIP);
            t.push((v2c / 2.0).tanh());
        }
        // exclusive products via forward/backward passes
        let d = b - a;
        excl.clear();
        let mut fwd = 1.0;
        for &x in t.iter() {
            excl.push(fwd);
            fwd *= x;
        }
        let mut bwd = 1.0;
        for i in (0..d).rev() {
            excl[i] *= bwd;
            bwd *= t[i];
        }
        for i in 0..d {
            let p = excl[i].clamp(-0.999_999_999_999, 0.999_999_999_999);
            c2v[a + i] = 2.0 * p.atanh();
        }
    }
}

fn posteriors(edges: &Edges, llr: &[f64], c2v: &[f64], post: &mut [f64]) {
    post.copy_from_slice(llr);
    for (e, &v) in edges.var.iter().enumerate() {
        post[v] += c2v[e];
    }
}

/// Signs of the check-to-variable messages after one iteration.
pub fn first_iteration_signs(code: &ParityCheckCode, llr: &[f64]) -> Vec<i8> {
    let edges = Edges::new(code);
    let post: Vec<f64> = llr.iter().map(|l| l.clamp(-LLR_CLIP, LLR_CLIP)).collect();
    let mut c2v = vec![0.0; edges.var.len()];
    check_pass(&edges, &post, &mut c2v, &mut Vec::new(), &mut Vec::new());
    c2v.iter().map(|&m| if m > 0.0 { 1 } else if m < 0.0 { -1 } else { 0 }).collect()
}

/// Flooding sum-product decoding. LLRs are `log P(0)/P(1)`.
pub fn ldpc_bp_decode(code: &ParityCheckCode, llr: &[f64], max_iters: usize) -> Result<BpOutcome> {
    if llr.len() != code.n() {
        return input_err(format!("{} LLRs for a length-{} code", llr.len(), code.n()));
    }
    let hard = |post: &[f64]| post.iter().map(|&l| u8::from(l < 0.0)).collect::<Vec<u8>>();
    let llr: Vec<f64> = llr.iter().map(|l| l.clamp(-LLR_CLIP, LLR_CLIP)).collect();
    let mut bits = hard(&llr);
    let edges = Edges::new(code);
    let mut c2v = vec![0.0f64; edges.var.len()];
    let mut post = llr.clone();
    let (mut t, mut excl) = (Vec::new(), Vec::new());
    for it in 1..=max_iters {
        check_pass(&edges, &post, &mut c2v, &mut t, &mut excl);
        posteriors(&edges, &llr, &c2v, &mut post);
        bits = hard(&post);
        if code.syndrome_ok(&bits) {
            return Ok(BpOutcome { bits, converged: true, iterations: it });
        }
    }
    Ok(BpOutcome { bits, converged: false, iterations: max_iters })
}

/// Codes shipped with the crate, `n = 2304`, keyed by rate label.
pub const SHIPPED_CODES: [(&str, &str); 4] = [
    ("1/4", include_str!("codes/ira_2304_r14.alist")),
    ("1/3", include_str!("codes/ira_2304_r13.alist")),
    ("1/2", include_str!("codes/ira_2304_r12.alist")),
    ("2/3", include_str!("codes/ira_2304_r23.alist")),
];

pub fn shipped_code(rate: &str) -> Result<ParityCheckCode> {
    let (label, text) = SHIPPED_CODES
        .iter()
        .find(|(r, _)| *r == rate)
        .ok_or_else(|| Error::Config(format!("no shipped code of rate {rate}; have 1/4, 1/3, 1/2, 2/3")))?;
    ParityCheckCode::parse_alist(text, &format!("shipped code {label}"))
}
