use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::Matrix;

/// Candidate pool of a query: every segment, or only the query's movie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    CrossMovie,
    WithinMovie,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::CrossMovie => "cross-movie",
            Setting::WithinMovie => "within-movie",
        })
    }
}

/// Scores of every query against every candidate, with per-query pools.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalRun {
    setting: Setting,
    queries: Vec<String>,
    query_movies: Vec<String>,
    candidates: Vec<String>,
    candidate_movies: Vec<String>,
    /// `queries × candidates`; entries outside a query's pool are ignored.
    scores: Matrix,
    truth: Vec<usize>,
    pools: Vec<Vec<usize>>,
}

impl RetrievalRun {
    /// Pools follow from the setting. Fails if a ground-truth candidate
    /// falls outside its query's pool.
    pub fn new(
        setting: Setting,
        queries: Vec<(String, String)>,
        candidates: Vec<(String, String)>,
        scores: Matrix,
        truth: Vec<usize>,
    ) -> Result<RetrievalRun> {
        if scores.rows() != queries.len() || scores.cols() != candidates.len() {
            return Err(Error::invalid(format!(
                "score table is {}x{}, expected {}x{}",
                scores.rows(),
                scores.cols(),
                queries.len(),
                candidates.len()
            )));
        }
        if truth.len() != queries.len() {
            return Err(Error::invalid(
                "one ground-truth candidate per query required",
            ));
        }
        let (queries, query_movies): (Vec<_>, Vec<_>) = queries.into_iter().unzip();
        let (candidates, candidate_movies): (Vec<_>, Vec<_>) = candidates.into_iter().unzip();
        let pools: Vec<Vec<usize>> = query_movies
            .iter()
            .map(|qm| {
                (0..candidates.len())
                    .filter(|&c| setting == Setting::CrossMovie || candidate_movies[c] == *qm)
                    .collect()
            })
            .collect();
        for (q, &t) in truth.iter().enumerate() {
            if t >= candidates.len() || pools[q].binary_search(&t).is_err() {
                return Err(Error::invalid(format!(
                    "ground truth of query {:?} is not among its candidates",
                    queries[q]
                )));
            }
        }
        Ok(RetrievalRun {
            setting,
            queries,
            query_movies,
            candidates,
            candidate_movies,
            scores,
            truth,
            pools,
        })
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn queries(&self) -> &[String] {
        &self.queries
    }

    pub fn query_movie(&self, q: usize) -> &str {
        &self.query_movies[q]
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn candidate_movie(&self, c: usize) -> &str {
        &self.candidate_movies[c]
    }

    pub fn scores(&self) -> &Matrix {
        &self.scores
    }

    pub fn truth(&self, q: usize) -> usize {
        self.truth[q]
    }

    pub fn pool(&self, q: usize) -> &[usize] {
        &self.pools[q]
    }

    pub fn score(&self, q: usize, c: usize) -> f64 {
        self.scores.get(q, c)
    }

    /// Same run with one score replaced.
    pub(crate) fn set_score(&mut self, q: usize, c: usize, v: f64) {
        self.scores.set(q, c, v);
    }

    /// Pool of query `q`, best first; ties go to the lower candidate index.
    pub fn ranking(&self, q: usize) -> Vec<usize> {
        let mut order = self.pools[q].clone();
        order.sort_by(|&a, &b| {
            self.score(q, b)
                .total_cmp(&self.score(q, a))
                .then(a.cmp(&b))
        });
        order
    }

    /// 1-based rank of candidate `c` for query `q`.
    pub fn rank_of(&self, q: usize, c: usize) -> usize {
        let s = self.score(q, c);
        1 + self.pools[q]
            .iter()
            .filter(|&&o| {
                let so = self.score(q, o);
                so > s || (so == s && o < c)
            })
            .count()
    }

    pub fn truth_ranks(&self) -> Vec<usize> {
        (0..self.queries.len())
            .map(|q| self.rank_of(q, self.truth[q]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub setting: Setting,
    pub queries: usize,
    /// Recall@K as a fraction.
    pub recall_at: BTreeMap<usize, f64>,
    pub medr: f64,
    /// Mean over movies of the per-movie median rank; within-movie only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_medr: Option<f64>,
}

/// Median with the even-count convention of averaging the middle two.
pub fn median(values: &[usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    })
}

pub fn evaluate(run: &RetrievalRun, ks: &[usize]) -> Result<MetricReport> {
    if run.queries.is_empty() {
        return Err(Error::invalid("run has no queries"));
    }
    if ks.contains(&0) {
        return Err(Error::invalid("recall cutoffs must be at least 1"));
    }
    let ranks = run.truth_ranks();
    let total = ranks.len() as f64;
    let recall_at = ks
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / total))
        .collect();
    let avg_medr = (run.setting == Setting::WithinMovie).then(|| {
        let mut by_movie: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (q, &r) in ranks.iter().enumerate() {
            by_movie.entry(&run.query_movies[q]).or_default().push(r);
        }
        let medians: Vec<f64> = by_movie.values().filter_map(|r| median(r)).collect();
        medians.iter().sum::<f64>() / medians.len() as f64
    });
    Ok(MetricReport {
        setting: run.setting,
        queries: ranks.len(),
        recall_at,
        medr: median(&ranks).expect("nonempty"),
        avg_medr,
    })
}
