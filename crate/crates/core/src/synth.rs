//! Seeded generators for two-source entity-matching benchmarks.
//!
//! `products` mimics a retail/catalogue pair: one side carries long
//! marketing descriptions and full manufacturer names, the other abbreviates
//! editions and platforms, reformats versions, mostly omits the
//! manufacturer and has occasional typos. Products come in families that
//! share brand and line names, so near-duplicates compete in retrieval.
//! `movies` does the same for film catalogues (remakes, sequels, name
//! order, partial casts).
//!
//! Output is three CSV files per dataset: `local.csv`, `external.csv` and
//! `mapping.csv` (local id, external id).

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::TableSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Products,
    Movies,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Products => "products",
            Domain::Movies => "movies",
        })
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "products" => Ok(Domain::Products),
            "movies" => Ok(Domain::Movies),
            other => Err(format!("unknown domain `{other}` (expected products or movies)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub domain: Domain,
    pub local_size: usize,
    pub external_size: usize,
    pub matches: usize,
    pub seed: u64,
}

impl SynthParams {
    /// Product catalogue pair at roughly the size of the public benchmark.
    pub fn products() -> Self {
        Self {
            domain: Domain::Products,
            local_size: 5000,
            external_size: 5000,
            matches: 1300,
            seed: 2019,
        }
    }

    pub fn movies(size: usize) -> Self {
        Self {
            domain: Domain::Movies,
            local_size: size,
            external_size: size,
            matches: size / 4,
            seed: 2019,
        }
    }
}

/// A generated table as header plus rows of string cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthTable {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthDataset {
    pub local: SynthTable,
    pub external: SynthTable,
    pub mapping: Vec<(String, String)>,
}

/// Paths written by [`SynthDataset::write`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub local: PathBuf,
    pub external: PathBuf,
    pub mapping: PathBuf,
}

impl SynthDataset {
    pub fn write(&self, dir: &Path) -> io::Result<SynthFiles> {
        fs::create_dir_all(dir)?;
        let files = SynthFiles {
            local: dir.join("local.csv"),
            external: dir.join("external.csv"),
            mapping: dir.join("mapping.csv"),
        };
        write_csv(&files.local, &self.local.header, &self.local.rows)?;
        write_csv(&files.external, &self.external.header, &self.external.rows)?;
        let mapping: Vec<Vec<String>> = self
            .mapping
            .iter()
            .map(|(l, e)| vec![l.clone(), e.clone()])
            .collect();
        write_csv(&files.mapping, &["idLocal", "idExternal"], &mapping)?;
        Ok(files)
    }

    /// Column mappings for the generated files.
    pub fn table_specs() -> (TableSpec, TableSpec) {
        (TableSpec::new("local", "id", &[]), TableSpec::new("external", "id", &[]))
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn generate(params: &SynthParams) -> SynthDataset {
    assert!(params.matches <= params.local_size.min(params.external_size));
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    match params.domain {
        Domain::Products => products::generate(params, &mut rng),
        Domain::Movies => movies::generate(params, &mut rng),
    }
}

pub fn generate_to(params: &SynthParams, dir: &Path) -> io::Result<SynthFiles> {
    generate(params).write(dir)
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cr", "dr", "gr", "pr",
    "tr", "st", "sk", "pl", "cl", "fl", "sh", "ch", "th", "qu",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "io", "ou", "y"];
const CODAS: &[&str] = &["", "", "", "n", "r", "s", "x", "l", "m", "t", "ck", "nd", "rt"];

/// Pronounceable pseudo-words; the vocabulary stays stable for a seed.
fn pseudo_word<R: Rng + ?Sized>(rng: &mut R, syllables: usize) -> String {
    let mut word = String::new();
    for i in 0..syllables {
        word.push_str(ONSETS.choose(rng).unwrap());
        word.push_str(VOWELS.choose(rng).unwrap());
        if i + 1 == syllables || rng.gen_bool(0.3) {
            word.push_str(CODAS.choose(rng).unwrap());
        }
    }
    word
}

fn vocabulary<R: Rng + ?Sized>(rng: &mut R, size: usize, syllables: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut words = Vec::with_capacity(size);
    while words.len() < size {
        let n = rng.gen_range(syllables.clone());
        let w = pseudo_word(rng, n);
        if w.len() > 2 && seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

/// Index skewed towards small values, so a few brands or genres dominate.
fn skewed<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    let u: f64 = rng.gen();
    ((u * u) * n as f64) as usize
}

fn words_from<R, S>(rng: &mut R, pool: &[String], count: S) -> Vec<String>
where
    R: Rng + ?Sized,
    S: rand::distributions::uniform::SampleRange<usize>,
{
    let count = rng.gen_range(count);
    (0..count).map(|_| pool.choose(rng).unwrap().clone()).collect()
}

/// Drops or swaps one interior letter.
fn typo<R: Rng + ?Sized>(rng: &mut R, word: &str) -> String {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() < 5 {
        return word.to_owned();
    }
    let i = rng.gen_range(1..chars.len() - 1);
    let mut out = chars.clone();
    if rng.gen_bool(0.5) {
        out.remove(i);
    } else {
        out.swap(i, i + 1);
    }
    out.into_iter().collect()
}

/// Splits generated entities into matched, local-only and external-only
/// sets and assigns shuffled ids on both sides.
#[allow(clippy::too_many_arguments)]
fn assemble<R, E>(
    rng: &mut R,
    params: &SynthParams,
    entities: &[E],
    local_header: Vec<&'static str>,
    external_header: Vec<&'static str>,
    mut render_local: impl FnMut(&mut R, &E) -> Vec<String>,
    mut render_external: impl FnMut(&mut R, &E) -> Vec<String>,
    local_prefix: &str,
    external_prefix: &str,
) -> SynthDataset
where
    R: Rng,
{
    let matches = params.matches;
    let local_only = params.local_size - matches;
    let external_only = params.external_size - matches;
    assert!(entities.len() >= matches + local_only + external_only);

    let mut order: Vec<usize> = (0..entities.len()).collect();
    order.shuffle(rng);
    let matched = &order[..matches];
    let local_extra = &order[matches..matches + local_only];
    let external_extra = &order[matches + local_only..matches + local_only + external_only];

    let mut local_members: Vec<(usize, bool)> = matched.iter().map(|&e| (e, true)).collect();
    local_members.extend(local_extra.iter().map(|&e| (e, false)));
    local_members.shuffle(rng);
    let mut external_members: Vec<(usize, bool)> = matched.iter().map(|&e| (e, true)).collect();
    external_members.extend(external_extra.iter().map(|&e| (e, false)));
    external_members.shuffle(rng);

    let mut local_ids = std::collections::HashMap::new();
    let mut local_rows = Vec::with_capacity(local_members.len());
    for (i, &(e, is_match)) in local_members.iter().enumerate() {
        let id = format!("{local_prefix}{i:06}");
        if is_match {
            local_ids.insert(e, id.clone());
        }
        let mut row = vec![id];
        row.extend(render_local(rng, &entities[e]));
        local_rows.push(row);
    }
    let mut mapping = Vec::with_capacity(matches);
    let mut external_rows = Vec::with_capacity(external_members.len());
    for (i, &(e, is_match)) in external_members.iter().enumerate() {
        let id = format!("{external_prefix}{i:06}");
        if is_match {
            mapping.push((local_ids[&e].clone(), id.clone()));
        }
        let mut row = vec![id];
        row.extend(render_external(rng, &entities[e]));
        external_rows.push(row);
    }
    mapping.sort();
    SynthDataset {
        local: SynthTable {
            header: local_header,
            rows: local_rows,
        },
        external: SynthTable {
            header: external_header,
            rows: external_rows,
        },
        mapping,
    }
}

mod products {
    use super::*;

    const EDITIONS: &[(&str, &str)] = &[
        ("professional", "pro"),
        ("deluxe", "dlx"),
        ("standard", "std"),
        ("upgrade", "upg"),
        ("academic", "edu"),
        ("home", "home"),
        ("premium", "prem"),
        ("platinum", "plat"),
        ("small business", "sb"),
        ("family", "family"),
    ];
    const PLATFORMS: &[(&str, &str)] = &[
        ("windows", "win"),
        ("macintosh", "mac"),
        ("windows xp", "winxp"),
        ("windows vista", "vista"),
        ("pc", "pc"),
        ("mac os x", "osx"),
    ];
    const MEDIA: &[&str] = &["cd-rom", "dvd-rom", "download", "box", "jewel case"];
    const SUFFIXES: &[&str] = &["inc", "corp", "corporation", "software", "systems", "llc", "ltd", "interactive"];
    const LINE_WORDS: &[&str] = &[
        "studio", "suite", "manager", "works", "office", "photo", "music", "antivirus", "security", "design",
        "print", "video", "web", "mapping", "tax", "language", "typing", "backup", "recovery", "paint",
    ];

    pub(super) struct Product {
        brand: String,
        brand_full: String,
        line: Vec<String>,
        version: (u32, u32),
        year_style: bool,
        edition: Option<usize>,
        platform: Option<usize>,
        media: Option<usize>,
        category: usize,
        price: f64,
    }

    fn version_local(p: &Product) -> String {
        if p.year_style {
            format!("{}", 2000 + p.version.0)
        } else {
            format!("{}.{}", p.version.0, p.version.1)
        }
    }

    fn version_external<R: Rng + ?Sized>(rng: &mut R, p: &Product) -> String {
        if p.year_style {
            if rng.gen_bool(0.5) {
                format!("{:02}", p.version.0)
            } else {
                format!("{}", 2000 + p.version.0)
            }
        } else if p.version.1 == 0 && rng.gen_bool(0.6) {
            format!("{}", p.version.0)
        } else if rng.gen_bool(0.3) {
            format!("v{}.{}", p.version.0, p.version.1)
        } else {
            format!("{}.{}", p.version.0, p.version.1)
        }
    }

    pub(super) fn generate(params: &SynthParams, rng: &mut ChaCha8Rng) -> SynthDataset {
        let needed = params.local_size + params.external_size - params.matches;
        let brands_n = (needed / 40).clamp(8, 400);
        let brand_names = vocabulary(rng, brands_n, 2..=3);
        let line_vocab = vocabulary(rng, (needed / 2).max(50), 2..=3);
        let generic = vocabulary(rng, 300, 1..=3);
        let categories: Vec<Vec<String>> = (0..24).map(|_| vocabulary(rng, 40, 1..=3)).collect();

        let mut items = Vec::with_capacity(needed);
        while items.len() < needed {
            let b = skewed(rng, brands_n);
            let brand = brand_names[b].clone();
            let brand_full = format!("{brand} {}", SUFFIXES[b % SUFFIXES.len()]);
            let mut line = words_from(rng, &line_vocab, 1..=2);
            if rng.gen_bool(0.5) {
                line.push(LINE_WORDS.choose(rng).unwrap().to_string());
            }
            let category = b % categories.len();
            let year_style = rng.gen_bool(0.4);
            let base_version = if year_style { rng.gen_range(3..=9) } else { rng.gen_range(1..=12) };
            let base_price = rng.gen_range(9.0..400.0_f64);
            for _ in 0..rng.gen_range(1..=6) {
                items.push(Product {
                    brand: brand.clone(),
                    brand_full: brand_full.clone(),
                    line: line.clone(),
                    version: (base_version + rng.gen_range(0..=2), if rng.gen_bool(0.6) { 0 } else { rng.gen_range(1..=5) }),
                    year_style,
                    edition: rng.gen_bool(0.7).then(|| rng.gen_range(0..EDITIONS.len())),
                    platform: rng.gen_bool(0.6).then(|| rng.gen_range(0..PLATFORMS.len())),
                    media: rng.gen_bool(0.3).then(|| rng.gen_range(0..MEDIA.len())),
                    category,
                    price: (base_price * rng.gen_range(0.5..1.6) * 100.0).round() / 100.0,
                });
            }
        }
        items.truncate(needed);

        let render_local = |rng: &mut ChaCha8Rng, p: &Product| {
            let mut title = Vec::new();
            if rng.gen_bool(0.8) {
                title.push(p.brand.clone());
            }
            title.extend(p.line.iter().cloned());
            title.push(version_local(p));
            if let Some(e) = p.edition {
                title.push(EDITIONS[e].0.to_owned());
            }
            if let Some(pl) = p.platform {
                title.push(format!("({})", PLATFORMS[pl].0));
            }
            if let Some(m) = p.media {
                title.push(MEDIA[m].to_owned());
            }
            let mut description = words_from(rng, &categories[p.category], 8..20);
            description.extend(words_from(rng, &generic, 6..20));
            if rng.gen_bool(0.4) {
                description.extend(p.line.iter().cloned());
            }
            description.shuffle(rng);
            let manufacturer = if rng.gen_bool(0.9) { p.brand_full.clone() } else { String::new() };
            vec![title.join(" "), description.join(" "), manufacturer, format!("{:.2}", p.price)]
        };
        let render_external = |rng: &mut ChaCha8Rng, p: &Product| {
            let mut name = Vec::new();
            if rng.gen_bool(0.5) {
                name.push(p.brand.clone());
            }
            for word in &p.line {
                name.push(if rng.gen_bool(0.12) { typo(rng, word) } else { word.clone() });
            }
            if let Some(e) = p.edition {
                let (long, short) = EDITIONS[e];
                if rng.gen_bool(0.85) {
                    name.push(if rng.gen_bool(0.6) { short } else { long }.to_owned());
                }
            }
            name.push(version_external(rng, p));
            if let Some(pl) = p.platform {
                let (long, short) = PLATFORMS[pl];
                if rng.gen_bool(0.8) {
                    name.push(if rng.gen_bool(0.6) { short } else { long }.to_owned());
                }
            }
            if rng.gen_bool(0.2) {
                name.shuffle(rng);
            }
            let mut description = words_from(rng, &categories[p.category], 4..14);
            description.extend(words_from(rng, &generic, 3..12));
            description.shuffle(rng);
            let manufacturer = if rng.gen_bool(0.2) { p.brand.clone() } else { String::new() };
            let price = p.price * rng.gen_range(0.8..1.2);
            vec![name.join(" "), description.join(" "), manufacturer, format!("{price:.2}")]
        };
        assemble(
            rng,
            params,
            &items,
            vec!["id", "title", "description", "manufacturer", "price"],
            vec!["id", "name", "description", "manufacturer", "price"],
            render_local,
            render_external,
            "a",
            "g",
        )
    }
}

mod movies {
    use super::*;

    pub(super) struct Movie {
        title: Vec<String>,
        sequel: Option<u32>,
        year: u32,
        director: (String, String),
        cast: Vec<(String, String)>,
        genres: Vec<usize>,
    }

    const GENRES: &[&str] = &[
        "drama", "comedy", "thriller", "horror", "action", "romance", "documentary", "animation", "western",
        "crime", "mystery", "musical", "family", "war", "fantasy", "adventure",
    ];
    const ROMAN: &[&str] = &["ii", "iii", "iv", "v"];

    pub(super) fn generate(params: &SynthParams, rng: &mut ChaCha8Rng) -> SynthDataset {
        let needed = params.local_size + params.external_size - params.matches;
        // Small, skewed pools: common title words and prolific people make
        // titles and credits collide across films.
        let title_vocab = vocabulary(rng, (needed / 25).max(40), 1..=3);
        let first_names = vocabulary(rng, (needed / 40).max(30), 2..=2);
        let last_names = vocabulary(rng, (needed / 10).max(60), 2..=3);
        let people: Vec<(String, String)> = (0..(needed / 6).max(60))
            .map(|_| {
                (
                    first_names[skewed(rng, first_names.len())].clone(),
                    last_names[rng.gen_range(0..last_names.len())].clone(),
                )
            })
            .collect();
        let person = |rng: &mut ChaCha8Rng| people[skewed(rng, people.len())].clone();

        let mut items = Vec::with_capacity(needed);
        while items.len() < needed {
            let title_len = if rng.gen_bool(0.6) { 1 } else { rng.gen_range(2..=3) };
            let mut title: Vec<String> = (0..title_len)
                .map(|_| title_vocab[skewed(rng, title_vocab.len())].clone())
                .collect();
            if rng.gen_bool(0.3) {
                title.insert(0, "the".to_owned());
            }
            let year = rng.gen_range(1930..=2017);
            let director = person(rng);
            let cast: Vec<(String, String)> = (0..rng.gen_range(2..=6)).map(|_| person(rng)).collect();
            let genres: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| skewed(rng, GENRES.len())).collect();
            // Remakes and sequels share the title.
            for k in 0..rng.gen_range(1..=4u32) {
                let sequel = (k > 0 && rng.gen_bool(0.5)).then_some(k + 1);
                let remake = k > 0 && sequel.is_none();
                items.push(Movie {
                    title: title.clone(),
                    sequel,
                    year: if remake { rng.gen_range(year..=2018) } else { year + k * rng.gen_range(1..4) },
                    director: if remake { person(rng) } else { director.clone() },
                    cast: if remake { (0..cast.len()).map(|_| person(rng)).collect() } else { cast.clone() },
                    genres: genres.clone(),
                });
            }
        }
        items.truncate(needed);

        let render_local = |_: &mut ChaCha8Rng, m: &Movie| {
            let mut title = m.title.join(" ");
            if let Some(n) = m.sequel {
                title.push_str(&format!(" {n}"));
            }
            let cast: Vec<String> = m.cast.iter().map(|(f, l)| format!("{f} {l}")).collect();
            vec![
                title,
                m.year.to_string(),
                format!("{} {}", m.director.0, m.director.1),
                cast.join(", "),
                m.genres.iter().map(|&g| GENRES[g]).collect::<Vec<_>>().join(" "),
            ]
        };
        let render_external = |rng: &mut ChaCha8Rng, m: &Movie| {
            let mut words: Vec<String> = m
                .title
                .iter()
                .map(|w| if rng.gen_bool(0.08) { typo(rng, w) } else { w.clone() })
                .collect();
            if words.first().is_some_and(|w| w == "the") && rng.gen_bool(0.6) {
                words.remove(0);
                words.push(", the".to_owned());
            }
            let mut title = words.join(" ").replace(" , the", ", The");
            if let Some(n) = m.sequel {
                title.push(' ');
                title.push_str(ROMAN.get(n as usize - 2).copied().unwrap_or("v"));
            }
            let mut cast: Vec<String> = m
                .cast
                .iter()
                .filter_map(|(f, l)| {
                    if !rng.gen_bool(0.2) {
                        None
                    } else if rng.gen_bool(0.5) {
                        Some(format!("{l}, {f}"))
                    } else {
                        Some(l.clone())
                    }
                })
                .collect();
            cast.shuffle(rng);
            let release = if rng.gen_bool(0.5) {
                format!("{}-{:02}-{:02}", m.year, rng.gen_range(1..=12), rng.gen_range(1..=28))
            } else {
                String::new()
            };
            vec![
                title,
                release,
                if rng.gen_bool(0.3) {
                    format!("{}, {}", m.director.1, m.director.0)
                } else {
                    String::new()
                },
                cast.join("; "),
                if rng.gen_bool(0.5) {
                    m.genres.iter().map(|&g| GENRES[g]).collect::<Vec<_>>().join("/")
                } else {
                    String::new()
                },
            ]
        };
        assemble(
            rng,
            params,
            &items,
            vec!["id", "title", "year", "director", "cast", "genre"],
            vec!["id", "name", "release", "directed_by", "starring", "genres"],
            render_local,
            render_external,
            "m",
            "f",
        )
    }
}
