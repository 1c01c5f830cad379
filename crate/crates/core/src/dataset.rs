//! Corpus manifests, clip-level stratified splits, and the synthetic
//! pentatonic corpus used as a test fixture.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;

use crate::audio_io::{read_wav_info, write_wav, AudioClip, CORPUS_RATE_HZ};
use crate::error::{Error, Result};
use crate::label::{KinitLabel, N_CLASSES};
use crate::seed::sub_seed;

/// Clips longer than this get a scan warning.
pub const MAX_CLIP_SECONDS: f64 = 30.0;

pub const MANIFEST_HEADER: &str = "clip_id,path,label,duration_s,split";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(SplitTag::Train),
            "val" | "validation" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub clip_id: String,
    pub label: KinitLabel,
    pub duration_s: f64,
    pub split: Option<SplitTag>,
}

/// Labeled clips found under `root`, sorted by `clip_id`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    /// Files skipped or flagged during the scan.
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut counts = [0; N_CLASSES];
        for e in &self.entries {
            counts[e.label.index()] += 1;
        }
        counts
    }

    pub fn get(&self, clip_id: &str) -> Option<&ManifestEntry> {
        self.entries
            .binary_search_by(|e| e.clip_id.as_str().cmp(clip_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Copies the split assignment onto the entries.
    pub fn apply_split(&mut self, split: &SplitSpec) {
        for e in &mut self.entries {
            e.split = split.assignment.get(&e.clip_id).copied();
        }
    }

    /// The split recorded on the entries, if every entry has one.
    pub fn recorded_split(&self) -> Option<BTreeMap<String, SplitTag>> {
        self.entries
            .iter()
            .map(|e| e.split.map(|s| (e.clip_id.clone(), s)))
            .collect()
    }

    pub fn to_csv(&self, base: &Path) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(MANIFEST_HEADER.split(','))?;
        for e in &self.entries {
            let path = e.path.strip_prefix(base).unwrap_or(&e.path);
            w.write_record([
                e.clip_id.as_str(),
                &path.to_string_lossy(),
                e.label.name(),
                &format!("{:.3}", e.duration_s),
                e.split.map(|s| s.name()).unwrap_or(""),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Invariant(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes the manifest CSV; paths are stored relative to the CSV's folder
    /// when they live underneath it.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        std::fs::write(path, self.to_csv(base)?).map_err(|e| Error::io(path, e))
    }

    /// Reads a manifest CSV; relative paths resolve against the CSV's folder.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        })?;
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER.split(',').collect::<Vec<_>>() {
            return Err(Error::format(
                path,
                format!("expected header '{MANIFEST_HEADER}'"),
            ));
        }
        let mut entries = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |m: String| Error::format(path, format!("row {}: {m}", i + 1));
            let label = rec[2].parse::<KinitLabel>().map_err(bad)?;
            let duration_s = rec[3]
                .parse::<f64>()
                .map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
            let split = if rec[4].is_empty() {
                None
            } else {
                Some(rec[4].parse::<SplitTag>().map_err(bad)?)
            };
            let p = PathBuf::from(&rec[1]);
            entries.push(ManifestEntry {
                path: if p.is_absolute() { p } else { base.join(p) },
                clip_id: rec[0].to_string(),
                label,
                duration_s,
                split,
            });
        }
        entries.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
        if entries.windows(2).any(|w| w[0].clip_id == w[1].clip_id) {
            return Err(Error::format(path, "duplicate clip_id"));
        }
        Ok(Manifest {
            root: base,
            entries,
            warnings: Vec::new(),
        })
    }
}

fn name_pattern() -> Regex {
    Regex::new(r"(?i)^(tizita|bati|ambassel|anchihoye)(\d+)$").expect("static regex")
}

/// Parses `Bati12`-style stems, case-insensitively. Returns the label and the
/// canonical clip id (class name in title case plus the digits as written).
pub fn parse_clip_stem(stem: &str) -> Option<(KinitLabel, String)> {
    let caps = name_pattern().captures(stem)?;
    let label: KinitLabel = caps[1].parse().ok()?;
    Some((label, format!("{}{}", label.name(), &caps[2])))
}

/// Recursively collects `.wav` files whose stems follow the corpus naming
/// convention. Other files and duplicate ids become warnings.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<Manifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "dataset root is not a directory",
            ),
        ));
    }
    let mut warnings = Vec::new();
    let mut entries: Vec<ManifestEntry> = Vec::new();
    let mut seen = HashSet::new();
    let walker = walkdir::WalkDir::new(root).sort_by_file_name();
    for item in walker {
        let item = item.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(
                path,
                e.into_io_error()
                    .unwrap_or_else(|| std::io::Error::other("walk failed")),
            )
        })?;
        if !item.file_type().is_file() {
            continue;
        }
        let path = item.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if !is_wav {
            continue;
        }
        let stem = path.file_stem().unwrap_or_default().to_string_lossy();
        let Some((label, clip_id)) = parse_clip_stem(&stem) else {
            warnings.push(format!(
                "{}: name does not match <Kinit><number>, skipped",
                path.display()
            ));
            continue;
        };
        if !seen.insert(clip_id.clone()) {
            warnings.push(format!(
                "{}: duplicate clip id {clip_id}, skipped",
                path.display()
            ));
            continue;
        }
        let info = match read_wav_info(path) {
            Ok(info) => info,
            Err(e) => {
                warnings.push(format!("{}: unreadable ({e}), skipped", path.display()));
                continue;
            }
        };
        let duration_s = info.duration_s();
        if duration_s > MAX_CLIP_SECONDS {
            warnings.push(format!(
                "{}: {duration_s:.1} s is longer than {MAX_CLIP_SECONDS} s",
                path.display()
            ));
        }
        entries.push(ManifestEntry {
            path: path.to_path_buf(),
            clip_id,
            label,
            duration_s,
            split: None,
        });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    entries.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    Ok(Manifest {
        root: root.to_path_buf(),
        entries,
        warnings,
    })
}

/// A clip-level train/validation/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub assignment: BTreeMap<String, SplitTag>,
}

impl SplitSpec {
    pub fn clips(&self, tag: SplitTag) -> impl Iterator<Item = &str> {
        self.assignment
            .iter()
            .filter(move |(_, t)| **t == tag)
            .map(|(id, _)| id.as_str())
    }

    pub fn count(&self, tag: SplitTag) -> usize {
        self.clips(tag).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.10,
            test: 0.20,
        }
    }
}

/// Stratified clip-level split. Within each class the clips are shuffled with
/// a seeded generator and cut into `floor(n·train)`, `floor(n·val)`, and the
/// remainder for test.
pub fn split(manifest: &Manifest, fractions: SplitFractions, seed: u64) -> Result<SplitSpec> {
    let f = fractions;
    if [f.train, f.val, f.test]
        .iter()
        .any(|x| !(0.0..=1.0).contains(x))
        || (f.train + f.val + f.test - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidConfig(format!(
            "split fractions must be in [0,1] and sum to 1, got {f:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    for label in KinitLabel::ALL {
        let mut ids: Vec<&str> = manifest
            .entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.clip_id.as_str())
            .collect();
        let n = ids.len();
        if n == 0 {
            return Err(Error::InsufficientData(format!(
                "no clips of class {label}"
            )));
        }
        ids.shuffle(&mut rng);
        let n_train = (n as f64 * f.train + 1e-9).floor() as usize;
        let n_val = (n as f64 * f.val + 1e-9).floor() as usize;
        let n_test = n - n_train - n_val;
        if n_train == 0 || n_test == 0 {
            return Err(Error::InsufficientData(format!(
                "class {label} has {n} clips: {n_train} train, {n_val} val, {n_test} test"
            )));
        }
        for (i, id) in ids.into_iter().enumerate() {
            let tag = if i < n_train {
                SplitTag::Train
            } else if i < n_train + n_val {
                SplitTag::Val
            } else {
                SplitTag::Test
            };
            assignment.insert(id.to_string(), tag);
        }
    }
    Ok(SplitSpec {
        train_fraction: f.train,
        val_fraction: f.val,
        test_fraction: f.test,
        seed,
        assignment,
    })
}

/// Parameters of the synthetic corpus. Each class is a five-note pitch-class
/// set; clips are random walks over that set.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Pitch classes (0 = C) per class, in class-index order.
    pub class_pitch_sets: [[u8; 5]; N_CLASSES],
    pub notes_per_clip: usize,
    pub note_duration_s: f64,
    pub amplitude: f32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            class_pitch_sets: [
                [0, 2, 4, 7, 9],  // C D E G A
                [0, 4, 5, 7, 11], // C E F G B
                [0, 1, 5, 7, 8],  // C Db F G Ab
                [0, 1, 5, 6, 9],  // C Db F Gb A
            ],
            notes_per_clip: 120,
            note_duration_s: 0.25,
            amplitude: 0.5,
            seed: 42,
        }
    }
}

pub const SYNTH_CLIP_SECONDS: f64 = 30.0;
const SYNTH_OCTAVES: std::ops::RangeInclusive<u8> = 3..=5;
const RAMP_SECONDS: f64 = 0.010;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, set) in self.class_pitch_sets.iter().enumerate() {
            let uniq: HashSet<_> = set.iter().collect();
            if uniq.len() != 5 || set.iter().any(|&p| p > 11) {
                return Err(Error::InvalidConfig(format!(
                    "class {i} needs 5 distinct pitch classes in 0..12"
                )));
            }
        }
        for a in 0..N_CLASSES {
            for b in a + 1..N_CLASSES {
                let sa: HashSet<_> = self.class_pitch_sets[a].iter().collect();
                let sb: HashSet<_> = self.class_pitch_sets[b].iter().collect();
                if sa == sb {
                    return Err(Error::InvalidConfig(format!(
                        "classes {a} and {b} share a pitch set"
                    )));
                }
            }
        }
        if self.notes_per_clip == 0 || !(self.note_duration_s > 0.0) {
            return Err(Error::InvalidConfig(
                "need at least one note of positive length".into(),
            ));
        }
        Ok(())
    }

    /// MIDI numbers of the class's notes over octaves 3–5, ascending.
    pub fn class_notes(&self, class_index: usize) -> Vec<u8> {
        let mut notes: Vec<u8> = SYNTH_OCTAVES
            .flat_map(|oct| {
                self.class_pitch_sets[class_index]
                    .iter()
                    .map(move |&pc| 12 * (oct + 1) + pc)
            })
            .collect();
        notes.sort_unstable();
        notes
    }
}

pub fn midi_to_hz(midi: u8) -> f64 {
    440.0 * 2f64.powf((midi as f64 - 69.0) / 12.0)
}

/// A 30 s, 16 kHz clip of sine notes from class `class_index`'s pitch set.
/// The melody steps at most two scale degrees at a time. Deterministic per
/// `(spec.seed, class_index, clip_seed)`.
pub fn synth_clip(class_index: usize, spec: &SynthSpec, clip_seed: u64) -> Result<AudioClip> {
    let label = KinitLabel::from_index(class_index)
        .ok_or_else(|| Error::InvalidConfig(format!("class index {class_index} out of range")))?;
    spec.validate()?;
    let rate = CORPUS_RATE_HZ as f64;
    let total = (SYNTH_CLIP_SECONDS * rate).round() as usize;
    let mut samples = vec![0f32; total];
    let notes = spec.class_notes(class_index);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(
        spec.seed ^ clip_seed.rotate_left(17),
        &format!("synth-class{class_index}"),
    ));
    let note_len = (spec.note_duration_s * rate).round() as usize;
    let ramp = ((RAMP_SECONDS * rate).round() as usize).min(note_len / 2);
    let mut pos = rng.gen_range(0..notes.len());
    for n in 0..spec.notes_per_clip {
        let start = n * note_len;
        if start >= total {
            break;
        }
        if n > 0 {
            let step: isize = [-2, -1, 1, 2][rng.gen_range(0..4)];
            let mut next = pos as isize + step;
            if next < 0 || next >= notes.len() as isize {
                next = pos as isize - step;
            }
            pos = next as usize;
        }
        let freq = midi_to_hz(notes[pos]);
        let end = (start + note_len).min(total);
        let len = end - start;
        for (i, s) in samples[start..end].iter_mut().enumerate() {
            let env = if i < ramp {
                0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
            } else if i >= len - ramp {
                0.5 - 0.5 * (PI * (len - 1 - i) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            let phase = 2.0 * PI * freq * i as f64 / rate;
            *s = (spec.amplitude as f64 * env * phase.sin()) as f32;
        }
    }
    Ok(AudioClip {
        samples,
        sample_rate_hz: CORPUS_RATE_HZ,
        source_id: label.name().to_string(),
        label: Some(label),
    })
}

/// Writes `n_per_class` synthetic clips per class as `<Class><k>.wav` and
/// returns the scan of `out_dir`.
pub fn make_synth_corpus(
    spec: &SynthSpec,
    n_per_class: usize,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    if n_per_class < 5 {
        return Err(Error::InsufficientData(format!(
            "need at least 5 clips per class, asked for {n_per_class}"
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let jobs: Vec<(usize, usize)> = (0..N_CLASSES)
        .flat_map(|c| (1..=n_per_class).map(move |k| (c, k)))
        .collect();
    jobs.par_iter().try_for_each(|&(c, k)| {
        let label = KinitLabel::from_index(c).unwrap();
        let mut clip = synth_clip(c, spec, k as u64)?;
        clip.source_id = format!("{}{k}", label.name());
        write_wav(&clip, out_dir.join(format!("{}.wav", clip.source_id)))
    })?;
    scan_dataset(out_dir)
}
