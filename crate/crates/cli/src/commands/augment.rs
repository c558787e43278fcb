//! `asrl augment`: offline noise mixing over a directory of WAV files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use asrl_core::augment::{draw_snr, insert_zero_padding, mix_at_snr, PadSpan, SnrSpec, Waveform};
use asrl_core::jsonl::write_jsonl;
use asrl_core::wav::{read_wav, write_wav};
use clap::Args;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::failure::{runtime_msg, Classify, Failure};
use crate::manifest::{ensure_out_dir, ManifestBuilder};

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Directory of speech WAVs (mono 16-bit PCM).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory of noise WAVs, cycled over the speech files.
    #[arg(long)]
    pub noise: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub snr_mean: f64,
    #[arg(long, default_value_t = 5.0)]
    pub snr_std: f64,
    #[arg(long, default_value_t = -5.0)]
    pub snr_min: f64,
    #[arg(long, default_value_t = 30.0)]
    pub snr_max: f64,
    /// JSON file mapping file stem -> [[position_s, duration_s], ...] of
    /// silence to insert before mixing.
    #[arg(long)]
    pub pad_spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct SidecarRow {
    id: String,
    snr_db: f64,
    pads: Vec<PadSpan>,
    clip_fraction: f64,
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .runtime_context(format!("listing {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(runtime_msg(format!("no .wav files in {}", dir.display())));
    }
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

pub fn run(args: AugmentArgs) -> Result<(), Failure> {
    let spec = SnrSpec {
        mean_db: args.snr_mean,
        std_db: args.snr_std,
        clamp_min_db: args.snr_min,
        clamp_max_db: args.snr_max,
    };
    spec.validate().or_usage()?;

    let mut manifest = ManifestBuilder::new(
        "augment",
        Some(args.seed),
        serde_json::json!({ "snr": spec, "pad_spec": args.pad_spec }),
    );

    let pad_spec: BTreeMap<String, Vec<(f64, f64)>> = match &args.pad_spec {
        Some(path) => {
            manifest.input(path)?;
            let text = std::fs::read_to_string(path)
                .usage_context(format!("reading pad spec {}", path.display()))?;
            serde_json::from_str(&text)
                .usage_context(format!("parsing pad spec {}", path.display()))?
        }
        None => BTreeMap::new(),
    };

    let speech_files = wav_files(&args.input)?;
    let noise_files = wav_files(&args.noise)?;
    for path in speech_files.iter().chain(&noise_files) {
        manifest.input(path)?;
    }
    let noises: Vec<Waveform> = noise_files
        .iter()
        .map(|p| read_wav(p).or_runtime())
        .collect::<Result<_, _>>()?;

    ensure_out_dir(&args.out_dir)?;
    let mut master = ChaCha8Rng::seed_from_u64(args.seed);
    let mut sidecar: Vec<SidecarRow> = Vec::with_capacity(speech_files.len());
    let mut clipped_files = 0u64;

    for (i, path) in speech_files.iter().enumerate() {
        // one stream per file so edits to the corpus don't reshuffle others
        let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        let id = stem(path);
        let speech = read_wav(path).or_runtime()?;
        let (prepared, pads) = match pad_spec.get(&id) {
            Some(segments) => {
                let padded = insert_zero_padding(&speech, segments)
                    .map_err(|e| runtime_msg(format!("{id}: {e}")))?;
                (padded.wave, padded.pads)
            }
            None => (speech, Vec::new()),
        };
        let snr_db = draw_snr(&spec, &mut rng).or_runtime()?;
        let noise = &noises[i % noises.len()];
        let mixed = mix_at_snr(&prepared, noise, snr_db)
            .map_err(|e| runtime_msg(format!("{id}: {e}")))?;
        if mixed.clip_fraction > 0.0 {
            clipped_files += 1;
        }

        let out_name = format!("{id}.wav");
        write_wav(&args.out_dir.join(&out_name), &mixed.wave).or_runtime()?;
        manifest.output(&args.out_dir, &out_name)?;
        sidecar.push(SidecarRow {
            id,
            snr_db,
            pads,
            clip_fraction: mixed.clip_fraction,
        });
    }

    write_jsonl(&args.out_dir.join("augment_log.jsonl"), &sidecar).or_runtime()?;
    manifest.output(&args.out_dir, "augment_log.jsonl")?;
    manifest.count("speech_files", speech_files.len() as u64);
    manifest.count("noise_files", noise_files.len() as u64);
    manifest.count("files_with_clipping", clipped_files);
    manifest.write(&args.out_dir)?;

    println!(
        "augmented {} files ({} with clipping) into {}",
        speech_files.len(),
        clipped_files,
        args.out_dir.display()
    );
    Ok(())
}
