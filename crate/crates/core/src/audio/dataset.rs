use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mix_min, synth_utterance, write_wav, SpeakerProfile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_speakers: usize,
    pub counts: SplitCounts,
    pub snr_range: (f64, f64),
    /// Enrollment length; mixed sources are drawn uniformly from
    /// `[duration_s, 2 * duration_s]` before min-mode truncation.
    pub duration_s: f64,
    pub seed: u64,
}

impl DatasetSpec {
    fn validate(&self) -> Result<()> {
        if self.num_speakers < 4 {
            return Err(Error::Config(format!(
                "at least 4 speakers required, got {}",
                self.num_speakers
            )));
        }
        let c = self.counts;
        if c.train == 0 || c.valid == 0 || c.test == 0 {
            return Err(Error::Config(format!(
                "every split needs at least one mixture, got {}/{}/{}",
                c.train, c.valid, c.test
            )));
        }
        let (lo, hi) = self.snr_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("invalid snr range [{lo}, {hi}]")));
        }
        if !(self.duration_s >= 0.5) {
            return Err(Error::Config(format!("duration {} s below 0.5 s", self.duration_s)));
        }
        Ok(())
    }
}

/// One manifest entry with paths resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureRecord {
    pub id: String,
    pub mixture: PathBuf,
    pub target: PathBuf,
    pub enrollment: PathBuf,
    pub speaker: String,
    pub interference_speaker: String,
    pub snr_db: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    id: String,
    mixture: String,
    target: String,
    enrollment: String,
    speaker: String,
    interference_speaker: String,
    snr_db: f64,
}

/// Stratified speaker panel: f0 and each formant are drawn from disjoint
/// strata assigned by independent permutations so no two talkers collide.
pub fn speaker_panel(num_speakers: usize, seed: u64) -> Vec<SpeakerProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FF_EE00_5EED);
    let strata = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..num_speakers).collect();
        idx.shuffle(rng);
        let width = (hi - lo) / num_speakers as f64;
        idx.into_iter()
            .map(|k| lo + width * (k as f64 + rng.gen_range(0.2..0.8)))
            .collect()
    };
    let f0 = strata(&mut rng, 85.0, 290.0);
    let f1 = strata(&mut rng, 300.0, 900.0);
    let f2 = strata(&mut rng, 1000.0, 2400.0);
    let f3 = strata(&mut rng, 2500.0, 3500.0);
    (0..num_speakers)
        .map(|k| {
            SpeakerProfile::new(
                format!("spk{k:03}"),
                f0[k],
                vec![f1[k], f2[k], f3[k]],
                seed.wrapping_mul(1_000_003).wrapping_add(k as u64),
            )
            .expect("strata lie inside the valid ranges")
        })
        .collect()
}

fn sample_seed(seed: u64, split: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (split << 56)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Writes `train.jsonl`, `valid.jsonl`, `test.jsonl` and their audio under
/// `out_dir`. Returns the three manifest paths.
pub fn build_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<[PathBuf; 3]> {
    spec.validate()?;
    let speakers = speaker_panel(spec.num_speakers, spec.seed);
    let splits = [
        ("train", spec.counts.train),
        ("valid", spec.counts.valid),
        ("test", spec.counts.test),
    ];
    let mut manifests = Vec::with_capacity(3);
    for (split_id, (name, count)) in splits.iter().enumerate() {
        let split_dir = out_dir.join(name);
        fs::create_dir_all(&split_dir).map_err(|e| Error::io(&split_dir, e))?;
        let lines: Vec<ManifestLine> = (0..*count)
            .into_par_iter()
            .map(|i| make_sample(spec, &speakers, split_id as u64, i, name, out_dir))
            .collect::<Result<_>>()?;
        let path = out_dir.join(format!("{name}.jsonl"));
        let mut text = String::new();
        for line in &lines {
            text.push_str(&serde_json::to_string(line)?);
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        manifests.push(path);
    }
    Ok(manifests.try_into().expect("three splits"))
}

fn make_sample(
    spec: &DatasetSpec,
    speakers: &[SpeakerProfile],
    split: u64,
    index: usize,
    split_name: &str,
    out_dir: &Path,
) -> Result<ManifestLine> {
    let base = sample_seed(spec.seed, split, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    let t = rng.gen_range(0..speakers.len());
    let mut k = rng.gen_range(0..speakers.len() - 1);
    if k >= t {
        k += 1;
    }
    let (lo, hi) = spec.snr_range;
    let snr_db = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let d = spec.duration_s;
    let dur_t = rng.gen_range(d..=2.0 * d);
    let dur_i = rng.gen_range(d..=2.0 * d);

    // utterance seeds are unique per (split, index, role)
    let target = synth_utterance(&speakers[t], dur_t, base ^ 0x1)?;
    let interference = synth_utterance(&speakers[k], dur_i, base ^ 0x2)?;
    let enrollment = synth_utterance(&speakers[t], d, base ^ 0x3)?;
    let mixed = mix_min(&target, &interference, snr_db)?;

    let id = format!("{split_name}_{index:06}");
    let rel = |suffix: &str| format!("{split_name}/{index:06}_{suffix}.wav");
    let (mix_rel, tgt_rel, enr_rel) = (rel("mix"), rel("target"), rel("enroll"));
    write_wav(&mixed.mixture, out_dir.join(&mix_rel))?;
    write_wav(&mixed.target, out_dir.join(&tgt_rel))?;
    write_wav(&enrollment, out_dir.join(&enr_rel))?;
    Ok(ManifestLine {
        id,
        mixture: mix_rel,
        target: tgt_rel,
        enrollment: enr_rel,
        speaker: speakers[t].speaker_id.clone(),
        interference_speaker: speakers[k].speaker_id.clone(),
        snr_db,
    })
}

/// Parses and validates a JSON-lines manifest. Errors name the 1-based line.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<MixtureRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: ManifestLine = serde_json::from_str(&line).map_err(|e| {
            Error::Validation(format!("{}:{lineno}: {e}", path.display()))
        })?;
        let resolve = |rel: &str, field: &str| -> Result<PathBuf> {
            let p = dir.join(rel);
            if p.is_file() {
                Ok(p)
            } else {
                Err(Error::Validation(format!(
                    "{}:{lineno}: {field} file {} does not exist",
                    path.display(),
                    p.display()
                )))
            }
        };
        out.push(MixtureRecord {
            mixture: resolve(&raw.mixture, "mixture")?,
            target: resolve(&raw.target, "target")?,
            enrollment: resolve(&raw.enrollment, "enrollment")?,
            id: raw.id,
            speaker: raw.speaker,
            interference_speaker: raw.interference_speaker,
            snr_db: raw.snr_db,
        });
    }
    Ok(out)
}

/// Writes records as a manifest, storing paths relative to the manifest's directory.
pub fn write_manifest(path: impl AsRef<Path>, records: &[MixtureRecord]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| -> String {
        p.strip_prefix(dir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in records {
        let line = ManifestLine {
            id: r.id.clone(),
            mixture: rel(&r.mixture),
            target: rel(&r.target),
            enrollment: rel(&r.enrollment),
            speaker: r.speaker.clone(),
            interference_speaker: r.interference_speaker.clone(),
            snr_db: r.snr_db,
        };
        writeln!(file, "{}", serde_json::to_string(&line)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvCorpusSpec {
    pub num_speakers: usize,
    pub train_utts: usize,
    pub test_utts: usize,
    pub duration_s: f64,
    pub seed: u64,
}

/// One utterance of the speaker-verification corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvUtterance {
    pub path: String,
    pub speaker: String,
    pub split: String,
}

/// Writes `utterances.jsonl` (train and test utterances per speaker) and a
/// balanced `trials.txt` over the test utterances. Trial lines read
/// `target|nontarget <enroll> <test>` with paths relative to `out_dir`.
pub fn build_sv_corpus(spec: &SvCorpusSpec, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if spec.num_speakers < 2 || spec.train_utts == 0 || spec.test_utts < 2 {
        return Err(Error::Config(
            "sv corpus needs >= 2 speakers, >= 1 train and >= 2 test utterances each".into(),
        ));
    }
    let speakers = speaker_panel(spec.num_speakers, spec.seed);
    let per_spk = spec.train_utts + spec.test_utts;
    let jobs: Vec<(usize, usize)> = (0..spec.num_speakers)
        .flat_map(|s| (0..per_spk).map(move |u| (s, u)))
        .collect();
    let utts: Vec<SvUtterance> = jobs
        .par_iter()
        .map(|&(s, u)| {
            let spk = &speakers[s];
            let seed = sample_seed(spec.seed, 7, (s * per_spk + u) as u64);
            let dur = ChaCha8Rng::seed_from_u64(seed).gen_range(spec.duration_s..=1.5 * spec.duration_s);
            let sig = synth_utterance(spk, dur, seed)?;
            let split = if u < spec.train_utts { "train" } else { "test" };
            let rel = format!("sv/{}/{u:04}.wav", spk.speaker_id);
            write_wav(&sig, out_dir.join(&rel))?;
            Ok(SvUtterance {
                path: rel,
                speaker: spk.speaker_id.clone(),
                split: split.to_string(),
            })
        })
        .collect::<Result<_>>()?;

    let utt_path = out_dir.join("utterances.jsonl");
    let mut text = String::new();
    for u in &utts {
        text.push_str(&serde_json::to_string(u)?);
        text.push('\n');
    }
    fs::write(&utt_path, text).map_err(|e| Error::io(&utt_path, e))?;

    let test: Vec<&SvUtterance> = utts.iter().filter(|u| u.split == "test").collect();
    let mut targets = Vec::new();
    let mut nontargets = Vec::new();
    for i in 0..test.len() {
        for j in i + 1..test.len() {
            if test[i].speaker == test[j].speaker {
                targets.push((i, j));
            } else {
                nontargets.push((i, j));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7121_a150);
    nontargets.shuffle(&mut rng);
    nontargets.truncate(targets.len());
    let mut seen = HashSet::new();
    let trials_path = out_dir.join("trials.txt");
    let mut text = String::new();
    for (label, pairs) in [("target", &targets), ("nontarget", &nontargets)] {
        for &(i, j) in pairs.iter() {
            if seen.insert((i, j)) {
                text.push_str(&format!("{label} {} {}\n", test[i].path, test[j].path));
            }
        }
    }
    fs::write(&trials_path, text).map_err(|e| Error::io(&trials_path, e))?;
    Ok((utt_path, trials_path))
}
