//! Item catalogs, interaction logs, the train/test split and seeded synthetic data.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};

pub type ItemId = usize;
pub type UserId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: ItemId,
    /// `(name, value)` pairs in schema order.
    pub attributes: Vec<(String, String)>,
}

impl ItemRecord {
    pub fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }
}

/// The action space: dense item ids `0..num_items` with textual attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemCatalog {
    schema: Vec<String>,
    items: Vec<ItemRecord>,
}

impl ItemCatalog {
    pub fn new(schema: Vec<String>, items: Vec<ItemRecord>) -> Result<Self> {
        if schema.is_empty() {
            return Err(Error::invalid("catalog schema has no attribute columns"));
        }
        if items.len() < 2 {
            return Err(Error::invalid("catalog needs at least 2 items"));
        }
        for (expected, item) in items.iter().enumerate() {
            if item.id != expected {
                return Err(Error::invalid(format!("id gap at {expected}")));
            }
            let names: Vec<&str> = item.attributes.iter().map(|(n, _)| n.as_str()).collect();
            if names != schema.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::invalid(format!(
                    "item {} attributes {names:?} do not match schema {schema:?}",
                    item.id
                )));
            }
            if item.attributes.iter().all(|(_, v)| v.trim().is_empty()) {
                return Err(Error::invalid(format!(
                    "item {} has no non-empty attribute",
                    item.id
                )));
            }
        }
        Ok(ItemCatalog { schema, items })
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn item(&self, id: ItemId) -> Option<&ItemRecord> {
        self.items.get(id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSequence {
    pub user_id: UserId,
    pub items: Vec<ItemId>,
    pub timestamps: Vec<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionLog {
    pub sequences: Vec<UserSequence>,
    /// Sequences shorter than two interactions dropped while loading.
    #[serde(default)]
    pub dropped_short: usize,
}

impl InteractionLog {
    pub fn from_sequences(sequences: Vec<UserSequence>) -> Self {
        InteractionLog {
            sequences,
            dropped_short: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn num_interactions(&self) -> usize {
        self.sequences.iter().map(|s| s.items.len()).sum()
    }

    pub fn validate(&self, num_items: usize) -> Result<()> {
        if let Some(seq) = self.sequences.iter().find(|s| s.items.len() < 2) {
            return Err(Error::invalid(format!(
                "user {} has a sequence shorter than 2",
                seq.user_id
            )));
        }
        self.validate_items(num_items)
    }

    /// Id range and timestamp order only; short sequences are allowed.
    pub fn validate_items(&self, num_items: usize) -> Result<()> {
        for seq in &self.sequences {
            if seq.items.len() != seq.timestamps.len() {
                return Err(Error::invalid(format!(
                    "user {} has mismatched item/timestamp counts",
                    seq.user_id
                )));
            }
            if let Some(&bad) = seq.items.iter().find(|&&i| i >= num_items) {
                return Err(Error::invalid(format!(
                    "user {} references item {bad} >= {num_items}",
                    seq.user_id
                )));
            }
            if seq.timestamps.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::invalid(format!(
                    "user {} has decreasing timestamps",
                    seq.user_id
                )));
            }
        }
        Ok(())
    }

    pub fn sequence_for(&self, user: UserId) -> Option<&UserSequence> {
        self.sequences.iter().find(|s| s.user_id == user)
    }
}

/// Latent vectors behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    pub user_latents: Vec<Vec<f64>>,
    pub item_latents: Vec<Vec<f64>>,
}

impl SyntheticGroundTruth {
    pub fn dim(&self) -> usize {
        self.item_latents.first().map_or(0, Vec::len)
    }

    pub fn affinity(&self, user: usize, item: ItemId) -> f64 {
        crate::nn::dot(&self.user_latents[user], &self.item_latents[item])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), self)
            .map_err(|e| Error::invalid(format!("writing {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let truth: Self =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: e.line() as u64,
                msg: e.to_string(),
            })?;
        let dim = truth.dim();
        let consistent = truth
            .user_latents
            .iter()
            .chain(&truth.item_latents)
            .all(|v| v.len() == dim && v.iter().all(|x| x.is_finite()));
        if !consistent || dim == 0 {
            return Err(Error::invalid(format!(
                "{}: latent vectors must be finite with one common dimension",
                path.display()
            )));
        }
        Ok(truth)
    }
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Fields)
        .from_reader(file))
}

fn csv_line(err: &csv::Error) -> u64 {
    err.position().map_or(0, |p| p.line())
}

/// Read `id,<attr1>,<attr2>,...` rows (header required).
pub fn load_catalog(path: &Path) -> Result<ItemCatalog> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, csv_line(&e), e.to_string()))?
        .clone();
    if headers.get(0) != Some("id") || headers.len() < 2 {
        return Err(parse_err(
            path,
            1,
            "header must be `id` followed by at least one attribute column",
        ));
    }
    let schema: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut rows: BTreeMap<ItemId, ItemRecord> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, csv_line(&e), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let id: ItemId = record[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid item id `{}`", &record[0])))?;
        let attributes: Vec<(String, String)> = schema
            .iter()
            .zip(record.iter().skip(1))
            .map(|(n, v)| (n.clone(), v.to_owned()))
            .collect();
        if attributes.iter().all(|(_, v)| v.is_empty()) {
            return Err(parse_err(
                path,
                line,
                format!("item {id} has no non-empty attribute"),
            ));
        }
        if rows.insert(id, ItemRecord { id, attributes }).is_some() {
            return Err(parse_err(path, line, format!("duplicate id {id}")));
        }
    }
    for (expected, &id) in rows.keys().enumerate() {
        if id != expected {
            return Err(parse_err(path, 0, format!("id gap at {expected}")));
        }
    }
    ItemCatalog::new(schema, rows.into_values().collect())
}

pub fn write_catalog(catalog: &ItemCatalog, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let wrap = |e: csv::Error| Error::invalid(format!("writing {}: {e}", path.display()));
    let mut header = vec!["id".to_owned()];
    header.extend(catalog.schema().iter().cloned());
    writer.write_record(&header).map_err(wrap)?;
    for item in catalog.items() {
        let mut row = vec![item.id.to_string()];
        row.extend(item.attributes.iter().map(|(_, v)| v.clone()));
        writer.write_record(&row).map_err(wrap)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Read `user_id,item_id,timestamp` rows, grouping by user in timestamp order.
pub fn load_interactions(path: &Path, catalog: &ItemCatalog) -> Result<InteractionLog> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, csv_line(&e), e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["user_id", "item_id", "timestamp"] {
        return Err(parse_err(
            path,
            1,
            "header must be `user_id,item_id,timestamp`",
        ));
    }
    let mut by_user: BTreeMap<UserId, Vec<(i64, ItemId)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, csv_line(&e), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        let user: UserId = record[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid user id `{}`", &record[0])))?;
        let item: ItemId = record[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid item id `{}`", &record[1])))?;
        if item >= catalog.num_items() {
            return Err(parse_err(
                path,
                line,
                format!(
                    "unknown item id {item} (catalog has {})",
                    catalog.num_items()
                ),
            ));
        }
        let ts: i64 = record[2].parse().map_err(|_| {
            parse_err(
                path,
                line,
                format!("unparseable timestamp `{}`", &record[2]),
            )
        })?;
        by_user.entry(user).or_default().push((ts, item));
    }
    let mut log = InteractionLog::default();
    for (user_id, mut rows) in by_user {
        if rows.len() < 2 {
            log.dropped_short += 1;
            continue;
        }
        // stable: equal timestamps keep file order
        rows.sort_by_key(|&(ts, _)| ts);
        let (timestamps, items) = rows.into_iter().unzip();
        log.sequences.push(UserSequence {
            user_id,
            items,
            timestamps,
        });
    }
    if log.dropped_short > 0 {
        log::info!(
            "{}: dropped {} sequences shorter than 2",
            path.display(),
            log.dropped_short
        );
    }
    Ok(log)
}

pub fn write_interactions(log: &InteractionLog, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(PathBuf::from(path), e);
    writeln!(w, "user_id,item_id,timestamp").map_err(io)?;
    for seq in &log.sequences {
        for (item, ts) in seq.items.iter().zip(&seq.timestamps) {
            writeln!(w, "{},{},{}", seq.user_id, item, ts).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Seeded partition of whole user sequences: `floor(fraction * n)` go to train.
pub fn split_log(
    log: &InteractionLog,
    train_fraction: f64,
    seed: u64,
) -> Result<(InteractionLog, InteractionLog)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    if log.is_empty() {
        return Err(Error::invalid("cannot split an empty log"));
    }
    let n = log.len();
    let n_train = ((train_fraction * n as f64) + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, streams::SPLIT));
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |idx: &[usize]| {
        InteractionLog::from_sequences(idx.iter().map(|&i| log.sequences[i].clone()).collect())
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Shape and noise of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub seq_len: usize,
    pub d_lat: usize,
    /// Std-dev of the Gaussian perturbation added to affinities before ranking.
    pub noise_scale: f64,
    pub seed: u64,
}

pub const DEFAULT_SYNTHETIC_NOISE: f64 = 0.1;

pub fn generate_synthetic(
    num_users: usize,
    num_items: usize,
    seq_len: usize,
    d_lat: usize,
    seed: u64,
) -> Result<(ItemCatalog, InteractionLog, SyntheticGroundTruth)> {
    generate_synthetic_with(&SyntheticSpec {
        num_users,
        num_items,
        seq_len,
        d_lat,
        noise_scale: DEFAULT_SYNTHETIC_NOISE,
        seed,
    })
}

/// Each user's sequence lists items by descending noisy affinity; the first is the favourite.
pub fn generate_synthetic_with(
    spec: &SyntheticSpec,
) -> Result<(ItemCatalog, InteractionLog, SyntheticGroundTruth)> {
    let SyntheticSpec {
        num_users,
        num_items,
        seq_len,
        d_lat,
        noise_scale,
        seed,
    } = *spec;
    if num_users < 2 || num_items < 2 || seq_len < 2 || d_lat < 2 {
        return Err(Error::invalid("synthetic counts must all be >= 2"));
    }
    if seq_len > num_items {
        return Err(Error::invalid(format!(
            "seq_len {seq_len} exceeds num_items {num_items}"
        )));
    }
    if !(noise_scale >= 0.0) {
        return Err(Error::invalid("noise scale must be non-negative"));
    }
    let mut rng = stream_rng(seed, streams::DATA);
    let mut normal_vec =
        |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let user_latents: Vec<Vec<f64>> = (0..num_users).map(|_| normal_vec(d_lat)).collect();
    let item_latents: Vec<Vec<f64>> = (0..num_items).map(|_| normal_vec(d_lat)).collect();
    let truth = SyntheticGroundTruth {
        user_latents,
        item_latents,
    };

    let mut noise_rng = stream_rng(seed, streams::DATA + 100);
    let mut sequences = Vec::with_capacity(num_users);
    for user in 0..num_users {
        let mut scored: Vec<(f64, ItemId)> = (0..num_items)
            .map(|item| {
                let noise: f64 = StandardNormal.sample(&mut noise_rng);
                (truth.affinity(user, item) + noise_scale * noise, item)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let items: Vec<ItemId> = scored.iter().take(seq_len).map(|&(_, i)| i).collect();
        sequences.push(UserSequence {
            user_id: user as UserId,
            items,
            timestamps: (0..seq_len as i64).collect(),
        });
    }

    let schema = vec!["title".to_owned(), "album".to_owned(), "artist".to_owned()];
    let items = (0..num_items)
        .map(|id| {
            // strongest latent direction doubles as a coarse "genre"
            let lat = &truth.item_latents[id];
            let dir = crate::nn::argmax(&lat.iter().map(|v| v.abs()).collect::<Vec<_>>());
            let sign = if lat[dir] >= 0.0 { "bright" } else { "dark" };
            ItemRecord {
                id,
                attributes: vec![
                    ("title".to_owned(), format!("Track {id}")),
                    ("album".to_owned(), format!("Album {}", id / 10)),
                    ("artist".to_owned(), format!("{sign} artist {dir}")),
                ],
            }
        })
        .collect();
    let catalog = ItemCatalog::new(schema, items)?;
    Ok((catalog, InteractionLog::from_sequences(sequences), truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_file(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn catalog3() -> ItemCatalog {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "c.csv",
            "id,title,artist\n0,One,A\n1,\"Two, with comma\",B\n2,Three,C\n",
        );
        load_catalog(&p).unwrap()
    }

    #[test]
    fn loads_dense_catalog() {
        let c = catalog3();
        assert_eq!(c.num_items(), 3);
        assert_eq!(
            c.item(1).unwrap().attribute("title"),
            Some("Two, with comma")
        );
        assert_eq!(c.schema(), ["title", "artist"]);
    }

    #[test]
    fn catalog_errors() {
        let dir = tempfile::tempdir().unwrap();
        let gap = write_file(dir.path(), "gap.csv", "id,title\n0,a\n2,b\n");
        let err = load_catalog(&gap).unwrap_err().to_string();
        assert!(err.contains("id gap at 1"), "{err}");

        let dup = write_file(dir.path(), "dup.csv", "id,title\n0,a\n1,b\n1,c\n");
        let err = load_catalog(&dup).unwrap_err().to_string();
        assert!(
            err.contains(":4:") && err.contains("duplicate id 1"),
            "{err}"
        );

        let bad = write_file(dir.path(), "bad.csv", "id,title\n0,a\nx,b\n");
        let err = load_catalog(&bad).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");

        let empty_attr = write_file(dir.path(), "e.csv", "id,title\n0,a\n1,\n");
        assert!(load_catalog(&empty_attr).is_err());

        assert!(matches!(
            load_catalog(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn interactions_group_sort_and_drop() {
        let c = catalog3();
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "i.csv",
            "user_id,item_id,timestamp\n7,2,40\n7,0,10\n7,1,30\n7,1,20\n9,0,5\n",
        );
        let log = load_interactions(&p, &c).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.sequences[0].items, vec![0, 1, 1, 2]);
        assert_eq!(log.sequences[0].timestamps, vec![10, 20, 30, 40]);
        assert_eq!(log.dropped_short, 1);
    }

    #[test]
    fn interaction_errors_name_the_row() {
        let c = catalog3();
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "i.csv",
            "user_id,item_id,timestamp\n1,0,1\n1,3,2\n",
        );
        let err = load_interactions(&p, &c).unwrap_err().to_string();
        assert!(
            err.contains(":3:") && err.contains("unknown item id 3"),
            "{err}"
        );
        let p = write_file(dir.path(), "t.csv", "user_id,item_id,timestamp\n1,0,noon\n");
        let err = load_interactions(&p, &c).unwrap_err().to_string();
        assert!(err.contains("timestamp"), "{err}");
    }

    fn toy_log(n: usize) -> InteractionLog {
        InteractionLog::from_sequences(
            (0..n)
                .map(|u| UserSequence {
                    user_id: u as u64,
                    items: vec![0, 1],
                    timestamps: vec![0, 1],
                })
                .collect(),
        )
    }

    #[test]
    fn split_counts_follow_floor_rule() {
        let (tr, te) = split_log(&toy_log(10), 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr, te) = split_log(&toy_log(5), 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (4, 1));
        assert_eq!(
            split_log(&toy_log(10), 0.8, 3).unwrap(),
            split_log(&toy_log(10), 0.8, 3).unwrap()
        );
        assert!(split_log(&toy_log(10), 1.0, 3).is_err());
        assert!(split_log(&toy_log(10), 0.0, 3).is_err());
        assert!(split_log(&InteractionLog::default(), 0.5, 3).is_err());
    }

    #[test]
    fn synthetic_shape_and_determinism() {
        let (cat, log, truth) = generate_synthetic(10, 50, 8, 4, 7).unwrap();
        assert_eq!(cat.num_items(), 50);
        assert_eq!(log.len(), 10);
        assert!(log.sequences.iter().all(|s| s.items.len() == 8));
        log.validate(50).unwrap();
        assert_eq!(truth.user_latents.len(), 10);
        let again = generate_synthetic(10, 50, 8, 4, 7).unwrap();
        assert_eq!(again.1, log);
        assert_eq!(again.2, truth);
        assert!(generate_synthetic(1, 50, 8, 4, 7).is_err());
        assert!(generate_synthetic(3, 5, 8, 4, 7).is_err());
    }

    #[test]
    fn synthetic_noise_free_sequences_are_exact_top_lists() {
        let spec = SyntheticSpec {
            num_users: 12,
            num_items: 300,
            seq_len: 6,
            d_lat: 5,
            noise_scale: 0.0,
            seed: 21,
        };
        let (_, log, truth) = generate_synthetic_with(&spec).unwrap();
        for seq in &log.sequences {
            let u = seq.user_id as usize;
            // exhaustive ranking
            let mut all: Vec<(f64, usize)> = (0..spec.num_items)
                .map(|i| {
                    let s: f64 = truth.user_latents[u]
                        .iter()
                        .zip(&truth.item_latents[i])
                        .map(|(a, b)| a * b)
                        .sum();
                    (s, i)
                })
                .collect();
            all.sort_by(|a, b| b.0.total_cmp(&a.0));
            let top: Vec<usize> = all.iter().take(spec.seq_len).map(|p| p.1).collect();
            assert_eq!(seq.items, top);
            assert_eq!(seq.items[0], all[0].1);
        }
    }

    #[test]
    fn catalog_and_log_round_trip() {
        let (cat, log, truth) = generate_synthetic(6, 20, 4, 3, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("c.csv");
        let ip = dir.path().join("i.csv");
        let tp = dir.path().join("t.json");
        write_catalog(&cat, &cp).unwrap();
        write_interactions(&log, &ip).unwrap();
        truth.save(&tp).unwrap();
        let cat2 = load_catalog(&cp).unwrap();
        assert_eq!(cat2, cat);
        assert_eq!(load_interactions(&ip, &cat2).unwrap(), log);
        assert_eq!(SyntheticGroundTruth::load(&tp).unwrap(), truth);
    }

    proptest::proptest! {
        #[test]
        fn split_is_a_disjoint_cover(n in 1usize..60, frac in 0.05f64..0.95, seed in 0u64..1000) {
            let log = toy_log(n);
            let (tr, te) = split_log(&log, frac, seed).unwrap();
            let mut users: Vec<u64> = tr.sequences.iter().chain(&te.sequences).map(|s| s.user_id).collect();
            users.sort_unstable();
            proptest::prop_assert_eq!(users, (0..n as u64).collect::<Vec<_>>());
            proptest::prop_assert_eq!(tr.len(), (frac * n as f64 + 1e-9).floor() as usize);
        }
    }
}
