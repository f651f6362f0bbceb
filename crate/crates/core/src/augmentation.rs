//! Augmented queries and training-data construction.
//!
//! An augmented query concatenates the input with retrieved exemplars:
//! `x @@ x'1 ## y'1 @@ x'2 ## y'2 ...`, with an optional guiding tag before
//! each exemplar. Training data diversifies exemplars via sampled-k and mixes
//! original, anonymized, and oracle-guided variants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Example;
use crate::mr::{
    anonymize_instance, parse_mr, serialize_mr, template_of, MrError, MrTree,
};
use crate::retrieval::{
    sampled_k_with_rng, Exemplar, ExemplarIndex, ExemplarList, RankedPool, RetrievalConfig,
    RetrievalError,
};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum AugmentationError {
    #[error("invalid augmentation config: {reason}")]
    InvalidConfig { reason: String },
    #[error("separator or tag {token:?} appears as a token in {place}")]
    SeparatorCollision { token: String, place: String },
    #[error("exemplar list is empty")]
    EmptyExemplars,
    #[error("query is empty")]
    EmptyQuery,
    #[error("malformed augmented query: {reason}")]
    MalformedAugmentedQuery { reason: String },
    #[error(transparent)]
    Mr(#[from] MrError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

/// Separators, guiding tag, and training-mix knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub exemplar_separator: String,
    pub mr_separator: String,
    pub guiding_tag: String,
    pub lists_per_example: usize,
    pub anonymized_fraction: f64,
    pub oracle_fraction: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            exemplar_separator: "@@".to_string(),
            mr_separator: "##".to_string(),
            guiding_tag: "PLATINUM".to_string(),
            lists_per_example: 20,
            anonymized_fraction: 0.5,
            oracle_fraction: 0.0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<(), AugmentationError> {
        let fail = |reason: String| Err(AugmentationError::InvalidConfig { reason });
        for (name, value) in [
            ("exemplar_separator", &self.exemplar_separator),
            ("mr_separator", &self.mr_separator),
            ("guiding_tag", &self.guiding_tag),
        ] {
            if value.is_empty() {
                return fail(format!("{name} must be non-empty"));
            }
            if value.chars().any(char::is_whitespace) {
                return fail(format!("{name} must not contain whitespace"));
            }
        }
        if self.exemplar_separator == self.mr_separator
            || self.exemplar_separator == self.guiding_tag
            || self.mr_separator == self.guiding_tag
        {
            return fail("separators and guiding tag must be pairwise distinct".to_string());
        }
        for (name, value) in [
            ("anonymized_fraction", self.anonymized_fraction),
            ("oracle_fraction", self.oracle_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return fail(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.anonymized_fraction + self.oracle_fraction > 1.0 {
            return fail("anonymized_fraction + oracle_fraction must not exceed 1".to_string());
        }
        Ok(())
    }

    fn reserved_tokens(&self) -> [&str; 3] {
        [
            &self.exemplar_separator,
            &self.mr_separator,
            &self.guiding_tag,
        ]
    }
}

fn check_collision(
    text: &str,
    place: &str,
    config: &AugmentationConfig,
) -> Result<(), AugmentationError> {
    for token in text.split_whitespace() {
        if config.reserved_tokens().contains(&token) {
            return Err(AugmentationError::SeparatorCollision {
                token: token.to_string(),
                place: place.to_string(),
            });
        }
    }
    Ok(())
}

/// Serialize `x` and its exemplars into an augmented query, inserting the
/// guiding tag before each exemplar when `guided` is set. Exactly one space
/// surrounds every separator and tag.
pub fn build_augmented_query(
    x: &str,
    exemplars: &[Exemplar],
    guided: bool,
    config: &AugmentationConfig,
) -> Result<String, AugmentationError> {
    config.validate()?;
    if x.trim().is_empty() {
        return Err(AugmentationError::EmptyQuery);
    }
    if exemplars.is_empty() {
        return Err(AugmentationError::EmptyExemplars);
    }
    check_collision(x, "the input query", config)?;

    let mut out = String::from(x);
    for exemplar in exemplars {
        check_collision(&exemplar.query, &format!("exemplar {}", exemplar.id), config)?;
        let mr_text = serialize_mr(&exemplar.mr);
        check_collision(&mr_text, &format!("exemplar {} MR", exemplar.id), config)?;
        out.push(' ');
        out.push_str(&config.exemplar_separator);
        out.push(' ');
        if guided {
            out.push_str(&config.guiding_tag);
            out.push(' ');
        }
        out.push_str(&exemplar.query);
        out.push(' ');
        out.push_str(&config.mr_separator);
        out.push(' ');
        out.push_str(&mr_text);
    }
    Ok(out)
}

/// An augmented query taken back apart.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAugmented {
    pub query: String,
    pub exemplars: Vec<(String, MrTree)>,
    pub guided: bool,
}

/// Exact inverse of [`build_augmented_query`].
pub fn split_augmented(
    x_plus: &str,
    config: &AugmentationConfig,
) -> Result<SplitAugmented, AugmentationError> {
    config.validate()?;
    let malformed = |reason: &str| AugmentationError::MalformedAugmentedQuery {
        reason: reason.to_string(),
    };
    let exemplar_sep = format!(" {} ", config.exemplar_separator);
    let mr_sep = format!(" {} ", config.mr_separator);
    let tag_prefix = format!("{} ", config.guiding_tag);

    let mut parts = x_plus.split(&exemplar_sep);
    let query = parts.next().unwrap_or("").to_string();
    if query.is_empty() {
        return Err(malformed("empty input query"));
    }
    let mut exemplars = Vec::new();
    let mut guided: Option<bool> = None;
    for chunk in parts {
        let (mut exemplar_query, mr_text) = chunk
            .split_once(&mr_sep)
            .ok_or_else(|| malformed("exemplar chunk has no MR separator"))?;
        let tagged = exemplar_query.starts_with(&tag_prefix);
        if tagged {
            exemplar_query = &exemplar_query[tag_prefix.len()..];
        }
        match guided {
            None => guided = Some(tagged),
            Some(g) if g != tagged => {
                return Err(malformed("guiding tag present on some exemplars but not all"))
            }
            Some(_) => {}
        }
        if exemplar_query.is_empty() {
            return Err(malformed("empty exemplar query"));
        }
        let mr = parse_mr(mr_text)
            .map_err(|e| malformed(&format!("exemplar MR does not parse: {e}")))?;
        exemplars.push((exemplar_query.to_string(), mr));
    }
    if exemplars.is_empty() {
        return Err(malformed("no exemplar separator found"));
    }
    Ok(SplitAugmented {
        query,
        exemplars,
        guided: guided.unwrap_or(false),
    })
}

/// Which construction produced a training instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Original,
    Anonymized,
    OracleGuided,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Anonymized => "anonymized",
            Variant::OracleGuided => "oracle_guided",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "original" => Some(Variant::Original),
            "anonymized" => Some(Variant::Anonymized),
            "oracle_guided" => Some(Variant::OracleGuided),
            _ => None,
        }
    }
}

/// One generator training pair: augmented query and target MR string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub augmented_query: String,
    pub target: String,
    pub variant: Variant,
    pub seed: u64,
}

/// Oracle exemplars: same-template entries from the pool, or a marker that
/// none exist.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleExemplars {
    Available(ExemplarList),
    Unavailable,
}

/// Up to k highest-ranked pool entries whose MR template equals the
/// example's. With `fill_from_general`, a shortfall is padded with the
/// highest-ranked remaining entries and flagged `short_oracle`.
pub fn make_oracle_exemplars<S: Scalar>(
    example: &Example,
    pool: &RankedPool<S>,
    k: usize,
    exclude_exact_query: bool,
    fill_from_general: bool,
) -> OracleExemplars {
    let target_template = template_of(&example.mr);
    let eligible: Vec<&Exemplar> = pool
        .items
        .iter()
        .map(|s| &s.exemplar)
        .filter(|e| !(exclude_exact_query && e.query == pool.query))
        .collect();
    let mut items: Vec<Exemplar> = eligible
        .iter()
        .filter(|e| template_of(&e.mr) == target_template)
        .take(k)
        .map(|e| (*e).clone())
        .collect();
    if items.is_empty() {
        return OracleExemplars::Unavailable;
    }
    let same_template_count = items.len();
    if fill_from_general && items.len() < k {
        for e in &eligible {
            if items.len() >= k {
                break;
            }
            if template_of(&e.mr) != target_template {
                items.push((*e).clone());
            }
        }
    }
    OracleExemplars::Available(ExemplarList {
        short: items.len() < k,
        short_oracle: same_template_count < k,
        items,
    })
}

/// Deterministic per-instance seed from the master seed, example id, and
/// list index.
pub fn instance_seed(master_seed: u64, example_id: &str, list_index: usize) -> u64 {
    crate::scalar::fnv1a64(&[
        &master_seed.to_le_bytes(),
        example_id.as_bytes(),
        &(list_index as u64).to_le_bytes(),
    ])
}

/// Build one training instance for `example` from its ranked pool.
pub fn build_training_instance<S: Scalar>(
    example: &Example,
    pool: &RankedPool<S>,
    retrieval_config: &RetrievalConfig,
    aug_config: &AugmentationConfig,
    seed: u64,
) -> Result<TrainingInstance, AugmentationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.random();
    let variant = if u < aug_config.anonymized_fraction {
        Variant::Anonymized
    } else if u < aug_config.anonymized_fraction + aug_config.oracle_fraction {
        Variant::OracleGuided
    } else {
        Variant::Original
    };

    let sampled = |rng: &mut ChaCha8Rng| sampled_k_with_rng(pool, retrieval_config, rng);
    let (augmented_query, target, variant) = match variant {
        Variant::Original => {
            let exemplars = sampled(&mut rng)?;
            let x_plus = build_augmented_query(&example.query, &exemplars.items, false, aug_config)?;
            (x_plus, serialize_mr(&example.mr), Variant::Original)
        }
        Variant::Anonymized => {
            let exemplars = sampled(&mut rng)?;
            let anon_seed: u64 = rng.random();
            let exemplar_mrs: Vec<MrTree> =
                exemplars.items.iter().map(|e| e.mr.clone()).collect();
            let (anon_target, anon_mrs, _map) =
                anonymize_instance(&example.mr, &exemplar_mrs, anon_seed)?;
            let anon_exemplars: Vec<Exemplar> = exemplars
                .items
                .iter()
                .zip(anon_mrs)
                .map(|(e, mr)| Exemplar {
                    mr,
                    ..e.clone()
                })
                .collect();
            let x_plus =
                build_augmented_query(&example.query, &anon_exemplars, false, aug_config)?;
            (x_plus, serialize_mr(&anon_target), Variant::Anonymized)
        }
        Variant::OracleGuided => {
            match make_oracle_exemplars(
                example,
                pool,
                retrieval_config.k,
                retrieval_config.exclude_exact_query,
                true,
            ) {
                OracleExemplars::Available(exemplars) => {
                    let x_plus =
                        build_augmented_query(&example.query, &exemplars.items, true, aug_config)?;
                    (x_plus, serialize_mr(&example.mr), Variant::OracleGuided)
                }
                // No same-template entry anywhere in the pool: fall back to
                // an original-variant instance so instance counts stay fixed.
                OracleExemplars::Unavailable => {
                    let exemplars = sampled(&mut rng)?;
                    let x_plus = build_augmented_query(
                        &example.query,
                        &exemplars.items,
                        false,
                        aug_config,
                    )?;
                    (x_plus, serialize_mr(&example.mr), Variant::Original)
                }
            }
        }
    };
    Ok(TrainingInstance {
        augmented_query,
        target,
        variant,
        seed,
    })
}

/// Construct the full training set: `lists_per_example` sampled-k lists per
/// example, each instance independently assigned a variant. Deterministic
/// per seed.
pub fn make_training_data<S: Scalar>(
    examples: &[Example],
    index: &ExemplarIndex<S>,
    retrieval_config: &RetrievalConfig,
    aug_config: &AugmentationConfig,
    seed: u64,
) -> Result<Vec<TrainingInstance>, AugmentationError> {
    retrieval_config.validate()?;
    aug_config.validate()?;
    let mut out = Vec::with_capacity(examples.len() * aug_config.lists_per_example);
    for example in examples {
        let pool = index.rank(&example.query, retrieval_config)?;
        for list_index in 0..aug_config.lists_per_example {
            let instance_seed = instance_seed(seed, &example.id, list_index);
            out.push(build_training_instance(
                example,
                &pool,
                retrieval_config,
                aug_config,
                instance_seed,
            )?);
        }
    }
    Ok(out)
}

/// Render instances as the training-file format: variant, augmented query,
/// and target, tab-separated, one instance per line.
pub fn training_data_to_tsv(instances: &[TrainingInstance]) -> String {
    let mut out = String::new();
    for instance in instances {
        out.push_str(instance.variant.as_str());
        out.push('\t');
        out.push_str(&instance.augmented_query);
        out.push('\t');
        out.push_str(&instance.target);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mr::labels_of;
    use crate::retrieval::{Embedder, RankedPool, ScoredExemplar};

    fn exemplar(id: &str, query: &str, mr: &str) -> Exemplar {
        Exemplar {
            id: id.to_string(),
            query: query.to_string(),
            mr: parse_mr(mr).unwrap(),
            domain: "d".to_string(),
        }
    }

    fn config() -> AugmentationConfig {
        AugmentationConfig::default()
    }

    #[test]
    fn unguided_format_is_pinned() {
        let e = exemplar("e1", "call dad", "[IN create call = [SL contact = dad]]");
        let x_plus = build_augmented_query("call mom", &[e], false, &config()).unwrap();
        assert_eq!(
            x_plus,
            "call mom @@ call dad ## [IN create call = [SL contact = dad]]"
        );
    }

    #[test]
    fn guided_format_inserts_tag_before_each_exemplar() {
        let e1 = exemplar("e1", "call dad", "[IN create call = [SL contact = dad]]");
        let e2 = exemplar("e2", "ring grandma", "[IN create call = [SL contact = grandma]]");
        let x_plus = build_augmented_query("call mom", &[e1, e2], true, &config()).unwrap();
        assert_eq!(
            x_plus,
            "call mom @@ PLATINUM call dad ## [IN create call = [SL contact = dad]] \
             @@ PLATINUM ring grandma ## [IN create call = [SL contact = grandma]]"
        );
    }

    #[test]
    fn collision_and_empty_guards() {
        let e = exemplar("e1", "call dad", "[IN a = b]");
        assert!(matches!(
            build_augmented_query("call @@ mom", &[e.clone()], false, &config()),
            Err(AugmentationError::SeparatorCollision { .. })
        ));
        let bad = exemplar("e2", "contains ## token", "[IN a = b]");
        assert!(matches!(
            build_augmented_query("call mom", &[bad], false, &config()),
            Err(AugmentationError::SeparatorCollision { .. })
        ));
        let tagged = exemplar("e3", "PLATINUM call", "[IN a = b]");
        assert!(matches!(
            build_augmented_query("call mom", &[tagged], false, &config()),
            Err(AugmentationError::SeparatorCollision { .. })
        ));
        assert!(matches!(
            build_augmented_query("call mom", &[], false, &config()),
            Err(AugmentationError::EmptyExemplars)
        ));
        assert!(matches!(
            build_augmented_query("", &[e], false, &config()),
            Err(AugmentationError::EmptyQuery)
        ));
    }

    #[test]
    fn split_inverts_build() {
        let exemplars = vec![
            exemplar("e1", "call dad", "[IN create call = [SL contact = dad]]"),
            exemplar("e2", "what time is it", "[IN get time = now]"),
        ];
        for guided in [false, true] {
            let x_plus =
                build_augmented_query("call mom please", &exemplars, guided, &config()).unwrap();
            let split = split_augmented(&x_plus, &config()).unwrap();
            assert_eq!(split.query, "call mom please");
            assert_eq!(split.guided, guided);
            assert_eq!(split.exemplars.len(), 2);
            assert_eq!(split.exemplars[0].0, "call dad");
            assert_eq!(serialize_mr(&split.exemplars[1].1), "[IN get time = now]");
            let rebuilt: Vec<Exemplar> = split
                .exemplars
                .iter()
                .zip(&exemplars)
                .map(|((q, mr), orig)| Exemplar {
                    id: orig.id.clone(),
                    query: q.clone(),
                    mr: mr.clone(),
                    domain: orig.domain.clone(),
                })
                .collect();
            assert_eq!(
                build_augmented_query(&split.query, &rebuilt, split.guided, &config()).unwrap(),
                x_plus
            );
        }
    }

    #[test]
    fn split_rejects_malformed_inputs() {
        assert!(matches!(
            split_augmented("no separators here", &config()),
            Err(AugmentationError::MalformedAugmentedQuery { .. })
        ));
        assert!(matches!(
            split_augmented("x @@ missing mr separator", &config()),
            Err(AugmentationError::MalformedAugmentedQuery { .. })
        ));
        // Mixed guidance.
        assert!(matches!(
            split_augmented(
                "x @@ PLATINUM a ## [IN a = b] @@ c ## [IN a = d]",
                &config()
            ),
            Err(AugmentationError::MalformedAugmentedQuery { .. })
        ));
        // MR does not parse.
        assert!(matches!(
            split_augmented("x @@ a ## not an mr", &config()),
            Err(AugmentationError::MalformedAugmentedQuery { .. })
        ));
    }

    #[test]
    fn config_validation_guards() {
        let mut c = config();
        c.mr_separator = "@@".into();
        assert!(c.validate().is_err());
        let mut c = config();
        c.guiding_tag = "two words".into();
        assert!(c.validate().is_err());
        let mut c = config();
        c.anonymized_fraction = 0.8;
        c.oracle_fraction = 0.3;
        assert!(c.validate().is_err());
    }

    fn pool_from(exemplars: Vec<Exemplar>, query: &str) -> RankedPool<f64> {
        let n = exemplars.len();
        RankedPool {
            query: query.to_string(),
            items: exemplars
                .into_iter()
                .enumerate()
                .map(|(rank, exemplar)| ScoredExemplar {
                    score: 1.0 - rank as f64 / n as f64,
                    exemplar,
                })
                .collect(),
        }
    }

    #[test]
    fn oracle_exemplars_filter_fill_and_unavailable() {
        let same = "[IN create call = [SL contact = dad]]";
        let other = "[IN get weather = today]";
        let target = Example {
            id: "t".into(),
            query: "call mom".into(),
            mr: parse_mr("[IN create call = [SL contact = mom]]").unwrap(),
            domain: "d".into(),
        };
        // 7 same-template entries, k=5: filter+take, rank order kept.
        let pool = pool_from(
            (0..7)
                .map(|i| exemplar(&format!("s{i}"), &format!("query {i}"), same))
                .collect(),
            "call mom",
        );
        let OracleExemplars::Available(list) = make_oracle_exemplars(&target, &pool, 5, false, true)
        else {
            panic!("oracle available");
        };
        assert_eq!(list.items.len(), 5);
        assert!(!list.short_oracle);
        assert_eq!(list.items[0].id, "s0");

        // 2 same-template entries, k=5: fill from the general pool.
        let mut mixed: Vec<Exemplar> = (0..2)
            .map(|i| exemplar(&format!("s{i}"), &format!("query {i}"), same))
            .collect();
        mixed.extend((0..5).map(|i| exemplar(&format!("g{i}"), &format!("other {i}"), other)));
        let pool = pool_from(mixed, "call mom");
        let OracleExemplars::Available(list) = make_oracle_exemplars(&target, &pool, 5, false, true)
        else {
            panic!("oracle available");
        };
        assert_eq!(list.items.len(), 5);
        assert!(list.short_oracle);
        assert_eq!(list.items[0].id, "s0");
        assert_eq!(list.items[1].id, "s1");
        assert_eq!(list.items[2].id, "g0");

        // Strict mode keeps only same-template entries.
        let OracleExemplars::Available(strict) =
            make_oracle_exemplars(&target, &pool, 5, false, false)
        else {
            panic!("oracle available");
        };
        assert_eq!(strict.items.len(), 2);
        assert!(strict.short_oracle);

        // Zero same-template entries.
        let pool = pool_from(
            (0..3).map(|i| exemplar(&format!("g{i}"), &format!("other {i}"), other)).collect(),
            "call mom",
        );
        assert_eq!(
            make_oracle_exemplars(&target, &pool, 5, false, true),
            OracleExemplars::Unavailable
        );
    }

    fn training_fixture() -> (Vec<Example>, crate::retrieval::ExemplarIndex<f64>) {
        let examples = crate::testkit::synthetic_examples(21, 10, "main");
        let index =
            crate::retrieval::ExemplarIndex::build(&examples, Embedder::Builtin(Default::default()))
                .unwrap();
        (examples, index)
    }

    #[test]
    fn training_data_counts_and_determinism() {
        let (examples, index) = training_fixture();
        let retrieval = RetrievalConfig {
            k: 3,
            exclude_exact_query: true,
            ..Default::default()
        };
        let aug = AugmentationConfig {
            lists_per_example: 20,
            ..Default::default()
        };
        let a = make_training_data(&examples, &index, &retrieval, &aug, 99).unwrap();
        assert_eq!(a.len(), 200);
        let b = make_training_data(&examples, &index, &retrieval, &aug, 99).unwrap();
        assert_eq!(a, b, "identical seeds must produce identical streams");
        let c = make_training_data(&examples, &index, &retrieval, &aug, 100).unwrap();
        assert_ne!(a, c, "different seeds should differ");
        // Round-trip every generated instance.
        for instance in &a {
            let split = split_augmented(&instance.augmented_query, &aug).unwrap();
            assert_eq!(split.guided, instance.variant == Variant::OracleGuided);
        }
    }

    #[test]
    fn anonymized_fraction_one_forces_numeric_targets() {
        let (examples, index) = training_fixture();
        let retrieval = RetrievalConfig {
            k: 2,
            exclude_exact_query: true,
            ..Default::default()
        };
        let aug = AugmentationConfig {
            lists_per_example: 5,
            anonymized_fraction: 1.0,
            oracle_fraction: 0.0,
            ..Default::default()
        };
        let instances = make_training_data(&examples, &index, &retrieval, &aug, 4).unwrap();
        for instance in &instances {
            assert_eq!(instance.variant, Variant::Anonymized);
            let target = parse_mr(&instance.target).unwrap();
            for label in labels_of(&target) {
                assert!(
                    label.words.len() == 1 && label.words[0].chars().all(|c| c.is_ascii_digit()),
                    "non-numeric label {label:?} in anonymized target"
                );
            }
        }
    }

    #[test]
    fn anonymized_share_tracks_fraction() {
        let (examples, index) = training_fixture();
        let retrieval = RetrievalConfig {
            k: 2,
            exclude_exact_query: true,
            ..Default::default()
        };
        let aug = AugmentationConfig {
            lists_per_example: 1000,
            anonymized_fraction: 0.5,
            ..Default::default()
        };
        let instances = make_training_data(&examples, &index, &retrieval, &aug, 7).unwrap();
        assert_eq!(instances.len(), 10_000);
        let share = instances
            .iter()
            .filter(|i| i.variant == Variant::Anonymized)
            .count() as f64
            / instances.len() as f64;
        assert!((share - 0.5).abs() < 0.02, "share {share}");
    }

    #[test]
    fn tsv_rendering_is_line_per_instance() {
        let instance = TrainingInstance {
            augmented_query: "x @@ a ## [IN a = b]".into(),
            target: "[IN a = b]".into(),
            variant: Variant::Original,
            seed: 3,
        };
        assert_eq!(
            training_data_to_tsv(&[instance]),
            "original\tx @@ a ## [IN a = b]\t[IN a = b]\n"
        );
    }
}
