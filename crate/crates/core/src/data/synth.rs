//! Synthetic genre/star benchmark.
//!
//! Every item has one genre and one star rating. Every user likes a subset of
//! genres and dislikes a subset of stars. A user may interact with an item only
//! if its genre is liked and its star is not disliked; the eligible pairs are
//! then subsampled. A disliked star on a liked genre is the confound: from the
//! genre alone the item looks like a positive.
//!
//! `confound_rate` is the probability that a user dislikes any given star, so
//! it is also the expected share of a user's liked-genre items that are
//! rejected only because of their star. With `confound_rate = 0` the genre
//! decides everything.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dataset::{InteractionDataset, ItemIdx, UserIdx};
use super::schema::{AttributeSchema, AttributeValue, FieldKind, FieldSpec};
use crate::rng::{self, Stream};
use crate::{Error, Result};

fn default_genre_like_rate() -> f64 {
    0.35
}

fn default_keep_rate() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_genres: usize,
    pub n_stars: usize,
    pub confound_rate: f64,
    pub seed: u64,
    /// Probability that a user likes a given genre.
    #[serde(default = "default_genre_like_rate")]
    pub genre_like_rate: f64,
    /// Probability that an eligible pair becomes an observed interaction.
    #[serde(default = "default_keep_rate")]
    pub keep_rate: f64,
}

impl SynthConfig {
    pub fn new(n_users: usize, n_items: usize, confound_rate: f64, seed: u64) -> Self {
        SynthConfig {
            n_users,
            n_items,
            n_genres: 6,
            n_stars: 5,
            confound_rate,
            seed,
            genre_like_rate: default_genre_like_rate(),
            keep_rate: default_keep_rate(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n_users", self.n_users),
            ("n_items", self.n_items),
            ("n_genres", self.n_genres),
            ("n_stars", self.n_stars),
        ] {
            if n < 2 {
                return Err(Error::Synthetic(format!(
                    "{name} must be at least 2, got {n}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.confound_rate) {
            return Err(Error::Synthetic(format!(
                "confound_rate {} outside [0, 1]",
                self.confound_rate
            )));
        }
        if !(self.genre_like_rate > 0.0 && self.genre_like_rate <= 1.0) {
            return Err(Error::Synthetic("genre_like_rate must be in (0, 1]".into()));
        }
        if !(self.keep_rate > 0.0 && self.keep_rate <= 1.0) {
            return Err(Error::Synthetic("keep_rate must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// The generated dataset together with the ground truth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub dataset: InteractionDataset,
    pub schema: AttributeSchema,
    pub item_genre: Vec<usize>,
    pub item_star: Vec<usize>,
    pub liked_genres: Vec<Vec<bool>>,
    pub disliked_stars: Vec<Vec<bool>>,
    pub config: SynthConfig,
}

impl SyntheticWorld {
    /// Whether the generative rule allows `user` to interact with `item`.
    pub fn eligible(&self, user: UserIdx, item: ItemIdx) -> bool {
        self.liked_genres[user][self.item_genre[item]]
            && !self.disliked_stars[user][self.item_star[item]]
    }

    /// Liked genre but disliked star: the blurry case.
    pub fn confounded(&self, user: UserIdx, item: ItemIdx) -> bool {
        self.liked_genres[user][self.item_genre[item]]
            && self.disliked_stars[user][self.item_star[item]]
    }
}

fn field(name: &str, prefix: &str, n: usize) -> FieldSpec {
    FieldSpec {
        name: String::from(name),
        kind: FieldKind::OneHot {
            vocab: (0..n).map(|i| format!("{prefix}{i}")).collect(),
        },
    }
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticWorld> {
    config.validate()?;
    let SynthConfig {
        n_users,
        n_items,
        n_genres,
        n_stars,
        ..
    } = *config;
    let mut rng = rng::stream(config.seed, Stream::Synthetic, 0, 0);

    let item_genre: Vec<usize> = (0..n_items)
        .map(|_| rng.random_range(0..n_genres))
        .collect();
    let item_star: Vec<usize> = (0..n_items).map(|_| rng.random_range(0..n_stars)).collect();

    let mut liked_genres = Vec::with_capacity(n_users);
    let mut disliked_stars = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let mut liked: Vec<bool> = (0..n_genres)
            .map(|_| rng.random_bool(config.genre_like_rate))
            .collect();
        if !liked.contains(&true) {
            liked[rng.random_range(0..n_genres)] = true;
        }
        let mut disliked: Vec<bool> = (0..n_stars)
            .map(|_| rng.random_bool(config.confound_rate))
            .collect();
        if !disliked.contains(&false) {
            disliked[rng.random_range(0..n_stars)] = false;
        }
        liked_genres.push(liked);
        disliked_stars.push(disliked);
    }

    let mut world = SyntheticWorld {
        dataset: InteractionDataset::from_pairs(0, 0, [])?,
        schema: AttributeSchema::new(vec![
            field("genre", "g", n_genres),
            field("star", "s", n_stars),
        ])?,
        item_genre,
        item_star,
        liked_genres,
        disliked_stars,
        config: config.clone(),
    };

    let mut eligible_items: Vec<Vec<ItemIdx>> = vec![Vec::new(); n_users];
    let mut eligible_users: Vec<Vec<UserIdx>> = vec![Vec::new(); n_items];
    for u in 0..n_users {
        for v in 0..n_items {
            if world.eligible(u, v) {
                eligible_items[u].push(v);
                eligible_users[v].push(u);
            }
        }
    }
    if let Some(u) = eligible_items.iter().position(Vec::is_empty) {
        return Err(Error::Synthetic(format!(
            "user {u} has no possible interaction"
        )));
    }
    if let Some(v) = eligible_users.iter().position(Vec::is_empty) {
        return Err(Error::Synthetic(format!(
            "item {v} has no possible interaction"
        )));
    }

    let mut pairs = Vec::new();
    let mut user_hit = vec![false; n_users];
    let mut item_hit = vec![false; n_items];
    for (u, items) in eligible_items.iter().enumerate() {
        for &v in items {
            if rng.random_bool(config.keep_rate) {
                pairs.push((u, v));
                user_hit[u] = true;
                item_hit[v] = true;
            }
        }
    }
    // every user and item keeps at least one observed interaction
    for u in 0..n_users {
        if !user_hit[u] {
            let v = eligible_items[u][rng.random_range(0..eligible_items[u].len())];
            pairs.push((u, v));
            item_hit[v] = true;
        }
    }
    for v in 0..n_items {
        if !item_hit[v] {
            let u = eligible_users[v][rng.random_range(0..eligible_users[v].len())];
            pairs.push((u, v));
        }
    }

    let attrs = (0..n_items)
        .map(|v| {
            vec![
                AttributeValue::OneHot(world.item_genre[v]),
                AttributeValue::OneHot(world.item_star[v]),
            ]
        })
        .collect();
    world.dataset = InteractionDataset::from_pairs(n_users, n_items, pairs)?
        .with_attributes(&world.schema, attrs)?;
    Ok(world)
}
