//! Line-based three-way merge.
//!
//! Each parent is aligned against the base with a longest-common-subsequence
//! diff, giving a list of hunks (a base line range replaced by new lines).
//! Hunks from opposite sides conflict only when they overlap: their ranges
//! share a line, both insert at the same point, or one inserts strictly
//! inside the other's range. Touching hunks merge cleanly.

use serde::Serialize;

/// Splits text into lines, each keeping its terminator.
pub fn split_lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').collect()
}

/// A base range `[start, end)` replaced by `lines` in one parent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hunk<'a> {
    pub start: usize,
    pub end: usize,
    pub lines: Vec<&'a str>,
}

/// LCS alignment of `a` against `b` as hunks over `a`.
pub fn diff_hunks<'a>(a: &[&str], b: &[&'a str]) -> Vec<Hunk<'a>> {
    // Trim the common prefix and suffix; the DP then runs on the middle.
    let mut pre = 0;
    while pre < a.len() && pre < b.len() && a[pre] == b[pre] {
        pre += 1;
    }
    let mut suf = 0;
    while suf < a.len() - pre && suf < b.len() - pre && a[a.len() - 1 - suf] == b[b.len() - 1 - suf]
    {
        suf += 1;
    }
    let (am, bm) = (&a[pre..a.len() - suf], &b[pre..b.len() - suf]);
    let (n, m) = (am.len(), bm.len());
    let mut dp = vec![0u32; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[idx(i, j)] = if am[i] == bm[j] {
                dp[idx(i + 1, j + 1)] + 1
            } else {
                dp[idx(i + 1, j)].max(dp[idx(i, j + 1)])
            };
        }
    }
    let mut hunks = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut open: Option<(usize, usize)> = None;
    let close =
        |open: &mut Option<(usize, usize)>, i: usize, j: usize, hunks: &mut Vec<Hunk<'a>>| {
            if let Some((si, sj)) = open.take() {
                hunks.push(Hunk {
                    start: pre + si,
                    end: pre + i,
                    lines: bm[sj..j].to_vec(),
                });
            }
        };
    while i < n || j < m {
        if i < n && j < m && am[i] == bm[j] {
            close(&mut open, i, j, &mut hunks);
            i += 1;
            j += 1;
        } else {
            open.get_or_insert((i, j));
            if j >= m || (i < n && dp[idx(i + 1, j)] >= dp[idx(i, j + 1)]) {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    close(&mut open, i, j, &mut hunks);
    hunks
}

/// Line ranges (0-based, half-open) of one conflict in base, left and right.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConflictHunk {
    pub base: (usize, usize),
    pub left: (usize, usize),
    pub right: (usize, usize),
    #[serde(rename = "baseText")]
    pub base_text: String,
    #[serde(rename = "leftText")]
    pub left_text: String,
    #[serde(rename = "rightText")]
    pub right_text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Merge3 {
    Clean(String),
    Conflict(Vec<ConflictHunk>),
}

impl Merge3 {
    pub fn is_clean(&self) -> bool {
        matches!(self, Merge3::Clean(_))
    }
}

fn overlaps(a: &Hunk, b: &Hunk) -> bool {
    let a_ins = a.start == a.end;
    let b_ins = b.start == b.end;
    match (a_ins, b_ins) {
        (true, true) => a.start == b.start,
        (true, false) => b.start < a.start && a.start < b.end,
        (false, true) => a.start < b.start && b.start < a.end,
        (false, false) => a.start.max(b.start) < a.end.min(b.end),
    }
}

/// Applies the given hunks (sorted, disjoint) to `base[from..to]`.
fn apply<'a>(base: &[&'a str], from: usize, to: usize, hunks: &[&Hunk<'a>]) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut cur = from;
    for h in hunks {
        out.extend_from_slice(&base[cur..h.start]);
        out.extend_from_slice(&h.lines);
        cur = h.end;
    }
    out.extend_from_slice(&base[cur..to]);
    out
}

fn delta(h: &Hunk) -> isize {
    h.lines.len() as isize - (h.end - h.start) as isize
}

pub fn diff3_merge(base: &str, left: &str, right: &str) -> Merge3 {
    let b = split_lines(base);
    let l = split_lines(left);
    let r = split_lines(right);
    let lh = diff_hunks(&b, &l);
    let rh = diff_hunks(&b, &r);

    // Union-find style clustering over opposite-side overlaps.
    let total = lh.len() + rh.len();
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (i, a) in lh.iter().enumerate() {
        for (j, c) in rh.iter().enumerate() {
            if overlaps(a, c) {
                let (x, y) = (find(&mut parent, i), find(&mut parent, lh.len() + j));
                parent[x] = y;
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> =
        Default::default();
    for i in 0..lh.len() {
        let root = find(&mut parent, i);
        clusters.entry(root).or_default().0.push(i);
    }
    for j in 0..rh.len() {
        let root = find(&mut parent, lh.len() + j);
        clusters.entry(root).or_default().1.push(j);
    }

    // Each cluster becomes a region edit: (start, end, replacement) or a conflict.
    struct Region<'a> {
        start: usize,
        end: usize,
        lines: Vec<&'a str>,
        left_only: bool,
    }
    let mut regions: Vec<Region> = Vec::new();
    let mut conflicts = Vec::new();
    for (ls, rs) in clusters.values() {
        let lhunks: Vec<&Hunk> = ls.iter().map(|&i| &lh[i]).collect();
        let rhunks: Vec<&Hunk> = rs.iter().map(|&j| &rh[j]).collect();
        let start = lhunks
            .iter()
            .chain(&rhunks)
            .map(|h| h.start)
            .min()
            .expect("non-empty cluster");
        let end = lhunks
            .iter()
            .chain(&rhunks)
            .map(|h| h.end)
            .max()
            .expect("non-empty cluster");
        if rhunks.is_empty() || lhunks.is_empty() {
            let hs = if rhunks.is_empty() { &lhunks } else { &rhunks };
            regions.push(Region {
                start,
                end,
                lines: apply(&b, start, end, hs),
                left_only: rhunks.is_empty(),
            });
            continue;
        }
        let lv = apply(&b, start, end, &lhunks);
        let rv = apply(&b, start, end, &rhunks);
        if lv == rv {
            regions.push(Region {
                start,
                end,
                lines: lv,
                left_only: true,
            });
            continue;
        }
        // Map the base region onto each side's line numbers.
        let offset = |hs: &[Hunk], members: &[usize]| -> isize {
            hs.iter()
                .enumerate()
                .filter(|(i, h)| {
                    !members.contains(i) && h.end <= start && (h.start < start || h.start == h.end)
                })
                .map(|(_, h)| delta(h))
                .sum()
        };
        let l0 = (start as isize + offset(&lh, ls)) as usize;
        let r0 = (start as isize + offset(&rh, rs)) as usize;
        conflicts.push(ConflictHunk {
            base: (start, end),
            left: (l0, l0 + lv.len()),
            right: (r0, r0 + rv.len()),
            base_text: b[start..end].concat(),
            left_text: lv.concat(),
            right_text: rv.concat(),
        });
    }
    if !conflicts.is_empty() {
        conflicts.sort_by_key(|c| c.base);
        return Merge3::Conflict(conflicts);
    }
    // Insertions sort before replacements starting at the same base line.
    regions.sort_by_key(|g| (g.start, g.end != g.start, g.end, !g.left_only));
    let mut out = String::with_capacity(base.len().max(left.len()).max(right.len()));
    let mut cur = 0;
    for g in &regions {
        for line in &b[cur..g.start] {
            out.push_str(line);
        }
        for line in &g.lines {
            out.push_str(line);
        }
        cur = cur.max(g.end);
    }
    for line in &b[cur..] {
        out.push_str(line);
    }
    Merge3::Clean(out)
}

/// Three-way merge of whole files, any of which may be absent.
pub fn merge_file(
    base: Option<&str>,
    left: Option<&str>,
    right: Option<&str>,
) -> Result<Option<String>, Vec<ConflictHunk>> {
    let whole = |b: Option<&str>, l: Option<&str>, r: Option<&str>| {
        let (b, l, r) = (b.unwrap_or(""), l.unwrap_or(""), r.unwrap_or(""));
        vec![ConflictHunk {
            base: (0, split_lines(b).len()),
            left: (0, split_lines(l).len()),
            right: (0, split_lines(r).len()),
            base_text: b.into(),
            left_text: l.into(),
            right_text: r.into(),
        }]
    };
    match (base, left, right) {
        (_, None, None) => Ok(None),
        (None, Some(l), None) => Ok(Some(l.into())),
        (None, None, Some(r)) => Ok(Some(r.into())),
        (None, Some(l), Some(r)) => match diff3_merge("", l, r) {
            Merge3::Clean(t) => Ok(Some(t)),
            Merge3::Conflict(c) => Err(c),
        },
        (Some(b), None, Some(r)) | (Some(b), Some(r), None) => {
            if b == r {
                Ok(None)
            } else {
                Err(whole(Some(b), left, right))
            }
        }
        (Some(b), Some(l), Some(r)) => match diff3_merge(b, l, r) {
            Merge3::Clean(t) => Ok(Some(t)),
            Merge3::Conflict(c) => Err(c),
        },
    }
}
