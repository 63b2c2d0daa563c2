use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, UserRecord};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const DEFAULT_SPLIT_RATIO: f64 = 0.7;
pub const DEFAULT_SPLIT_SEED: u64 = 42;

/// Profile/test partition of one user's posts. Both lists are in `seq` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub username: String,
    pub seed: u64,
    pub profile_posts: Vec<String>,
    pub test_posts: Vec<String>,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio.is_finite() && ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")))
    }
}

/// Number of profile posts for a user with `n` posts.
pub(crate) fn profile_size(n: usize, ratio: f64) -> usize {
    match n {
        0 => 0,
        1 => 1,
        _ => ((ratio * n as f64).round() as usize).clamp(1, n - 1),
    }
}

/// Seeded per-user random split: Fisher–Yates over the `seq`-ordered posts
/// with a generator keyed by `(seed, username)`; the first
/// `round(ratio * n)` shuffled posts form the profile set.
pub fn split_user_posts(user: &UserRecord, ratio: f64, seed: u64) -> Result<SplitAssignment> {
    check_ratio(ratio)?;
    if user.posts.is_empty() {
        return Err(Error::Usage(format!("user {:?} has no posts to split", user.username)));
    }
    let n = user.posts.len();
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::keyed(seed, &user.username).shuffle(&mut order);
    let k = profile_size(n, ratio);
    let mut profile = order[..k].to_vec();
    let mut test = order[k..].to_vec();
    profile.sort_unstable();
    test.sort_unstable();
    let ids = |idx: Vec<usize>| idx.into_iter().map(|i| user.posts[i].post_id.clone()).collect();
    Ok(SplitAssignment { username: user.username.clone(), seed, profile_posts: ids(profile), test_posts: ids(test) })
}

/// The reproducibility contract consumed by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratio: f64,
    pub corpus_hash: String,
    pub users: Vec<SplitAssignment>,
}

impl SplitManifest {
    pub fn build(corpus: &Corpus, ratio: f64, seed: u64) -> Result<Self> {
        check_ratio(ratio)?;
        let users = corpus
            .users
            .iter()
            .filter(|u| !u.posts.is_empty())
            .map(|u| split_user_posts(u, ratio, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { seed, ratio, corpus_hash: corpus.content_hash(), users })
    }

    pub fn assignment(&self, username: &str) -> Option<&SplitAssignment> {
        self.users.iter().find(|a| a.username == username)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks the manifest was built from `corpus` and references only its posts.
    pub fn validate_against(&self, corpus: &Corpus) -> Result<()> {
        let hash = corpus.content_hash();
        if hash != self.corpus_hash {
            return Err(Error::Config(format!(
                "manifest corpus hash {} does not match corpus {}",
                self.corpus_hash, hash
            )));
        }
        for a in &self.users {
            let user = corpus
                .user(&a.username)
                .ok_or_else(|| Error::Config(format!("manifest names unknown user {:?}", a.username)))?;
            let ids: HashSet<&str> = user.posts.iter().map(|p| p.post_id.as_str()).collect();
            if let Some(bad) = a.profile_posts.iter().chain(&a.test_posts).find(|id| !ids.contains(id.as_str())) {
                return Err(Error::Config(format!("manifest post {bad:?} not in corpus")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PoliticalLeaning, RawPost};
    use proptest::prelude::*;

    fn user(name: &str, n: usize) -> UserRecord {
        UserRecord {
            username: name.into(),
            declared_affiliation: "Democrat".into(),
            leaning: PoliticalLeaning::Left,
            posts: (0..n)
                .map(|i| RawPost {
                    post_id: format!("{name}-{i}"),
                    author: name.into(),
                    subforum: String::new(),
                    thread_id: "t".into(),
                    seq: i as u64 * 3,
                    text: format!("post {i}"),
                    quoted_spans: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn ten_posts_split_seven_three() {
        let a = split_user_posts(&user("u", 10), 0.7, 42).unwrap();
        assert_eq!(a.profile_posts.len(), 7);
        assert_eq!(a.test_posts.len(), 3);
    }

    #[test]
    fn deterministic() {
        let u = user("u", 25);
        let a = serde_json::to_string(&split_user_posts(&u, 0.7, 42).unwrap()).unwrap();
        let b = serde_json::to_string(&split_user_posts(&u, 0.7, 42).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = split_user_posts(&u, 0.7, 43).unwrap();
        assert_ne!(split_user_posts(&u, 0.7, 42).unwrap().test_posts, c.test_posts);
    }

    #[test]
    fn single_post_goes_to_profile() {
        let a = split_user_posts(&user("u", 1), 0.7, 42).unwrap();
        assert_eq!(a.profile_posts, vec!["u-0".to_string()]);
        assert!(a.test_posts.is_empty());
    }

    #[test]
    fn ratio_bounds() {
        for r in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert_eq!(split_user_posts(&user("u", 4), r, 42).unwrap_err().category(), "config");
        }
    }

    #[test]
    fn empty_user_is_usage_error() {
        assert_eq!(split_user_posts(&user("u", 0), 0.7, 42).unwrap_err().category(), "usage");
    }

    proptest! {
        #[test]
        fn split_partitions_posts(n in 1usize..200, seed in any::<u64>(), ratio in 0.05f64..0.95) {
            let u = user("someone", n);
            let a = split_user_posts(&u, ratio, seed).unwrap();
            let mut all: Vec<String> = a.profile_posts.iter().chain(&a.test_posts).cloned().collect();
            all.sort();
            let mut expect: Vec<String> = u.posts.iter().map(|p| p.post_id.clone()).collect();
            expect.sort();
            prop_assert_eq!(all, expect);
            let profile: HashSet<_> = a.profile_posts.iter().collect();
            prop_assert!(a.test_posts.iter().all(|t| !profile.contains(t)));
            if n >= 2 {
                prop_assert!(!a.test_posts.is_empty());
            }
        }
    }
}
