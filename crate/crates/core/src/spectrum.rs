//! Persistent marked length and Lyapunov spectra.
//!
//! A [`SpectrumStore`] caches solved orbit lengths keyed by canonical word,
//! bound to one table through a fingerprint of its canonical description.
//! The on-disk format is append-only JSON lines: a header record carrying the
//! fingerprint, then one record per word. Lengths are kept as decimal strings
//! at the mantissa size they were computed with and are never downgraded.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rug::ops::CompleteRound;
use rug::Float;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::geometry::ConvexObstacle;
use crate::real::{fl, parse_decimal, round_to, to_decimal, MAX_PREC};
use crate::solver::{solve_periodic, SolveOptions};
use crate::symbolic::{build_hn_general, build_tau_sigma_n, Word};

/// Hex SHA-256 of the obstacles' canonical shape descriptions; a store only
/// ever serves data for the table it was created against.
pub fn table_fingerprint(obstacles: &[ConvexObstacle]) -> String {
    let mut hasher = Sha256::new();
    for ob in obstacles {
        let desc = serde_json::to_string(ob.shape()).expect("shapes serialize");
        hasher.update(desc.as_bytes());
        hasher.update(b"\n");
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// One cached orbit: canonical word, decimal length and Lyapunov exponent,
/// the mantissa size used, and the solver's certification residual.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct SpectrumEntry {
    pub word: String,
    pub length: String,
    pub precision_bits: u32,
    pub le: String,
    pub residual: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    table_sha256: String,
    version: u32,
}

const STORE_VERSION: u32 = 1;

/// A queryable, persistent cache of solved orbit data for a single table.
///
/// Entries are keyed by the lexicographically minimal representative over
/// rotations and reversal, so a word, its rotations and its transpose all
/// share one record. A disk-backed store holds a sibling `.lock` file for
/// the lifetime of the value; concurrent writers are refused.
pub struct SpectrumStore {
    fingerprint: String,
    entries: BTreeMap<String, SpectrumEntry>,
    file: Option<File>,
    lock_path: Option<PathBuf>,
}

impl SpectrumStore {
    /// Purely in-memory store (no persistence), still fingerprinted.
    pub fn in_memory(obstacles: &[ConvexObstacle]) -> Self {
        SpectrumStore {
            fingerprint: table_fingerprint(obstacles),
            entries: BTreeMap::new(),
            file: None,
            lock_path: None,
        }
    }

    /// Opens (or creates) a disk-backed store for the given table, verifying
    /// the fingerprint of any existing file before serving its contents.
    pub fn open(path: &Path, obstacles: &[ConvexObstacle]) -> Result<Self, Error> {
        let fingerprint = table_fingerprint(obstacles);
        let lock_path = path.with_extension("lock");
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
            .map_err(|_| {
                Error::StoreFormat(format!(
                    "store {} is locked by another writer",
                    path.display()
                ))
            })?;
        let mut entries = BTreeMap::new();
        let exists = path.exists();
        if exists {
            let reader = BufReader::new(File::open(path)?);
            let mut lines = reader.lines();
            let head_line = lines
                .next()
                .ok_or_else(|| Error::StoreFormat("empty store file".into()))??;
            let header: Header = serde_json::from_str(&head_line)
                .map_err(|e| Error::StoreFormat(format!("bad header: {e}")))?;
            if header.version != STORE_VERSION {
                let _ = std::fs::remove_file(&lock_path);
                return Err(Error::StoreFormat(format!(
                    "unsupported store version {}",
                    header.version
                )));
            }
            if header.table_sha256 != fingerprint {
                let _ = std::fs::remove_file(&lock_path);
                return Err(Error::FingerprintMismatch {
                    found: header.table_sha256,
                    expected: fingerprint,
                });
            }
            for line in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: SpectrumEntry = serde_json::from_str(&line)
                    .map_err(|e| Error::StoreFormat(format!("bad record: {e}")))?;
                let keep_old = entries
                    .get(&entry.word)
                    .map_or(false, |old: &SpectrumEntry| {
                        old.precision_bits >= entry.precision_bits
                    });
                if !keep_old {
                    entries.insert(entry.word.clone(), entry);
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if !exists {
            let header = Header {
                table_sha256: fingerprint.clone(),
                version: STORE_VERSION,
            };
            writeln!(file, "{}", serde_json::to_string(&header).unwrap())?;
            file.flush()?;
        }
        Ok(SpectrumStore {
            fingerprint,
            entries,
            file: Some(file),
            lock_path: Some(lock_path),
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Cached record for a word, if any (keyed canonically).
    pub fn get(&self, word: &Word) -> Option<&SpectrumEntry> {
        self.entries.get(&word.canonicalize().to_string())
    }

    pub fn entries(&self) -> impl Iterator<Item = &SpectrumEntry> {
        self.entries.values()
    }

    fn record(&mut self, entry: SpectrumEntry) -> Result<(), Error> {
        let upgrade = match self.entries.get(&entry.word) {
            Some(old) => entry.precision_bits > old.precision_bits,
            None => true,
        };
        if !upgrade {
            return Ok(());
        }
        if let Some(f) = &mut self.file {
            writeln!(f, "{}", serde_json::to_string(&entry).unwrap())?;
            f.flush()?;
        }
        self.entries.insert(entry.word.clone(), entry);
        Ok(())
    }

    /// Solves (or serves from cache) the orbit for a word at the requested
    /// mantissa size and returns the fresh entry.
    fn ensure(
        &mut self,
        obstacles: &[ConvexObstacle],
        word: &Word,
        prec: u32,
    ) -> Result<SpectrumEntry, Error> {
        let canonical = word.canonicalize();
        let key = canonical.to_string();
        if let Some(e) = self.entries.get(&key) {
            if e.precision_bits >= prec {
                return Ok(e.clone());
            }
        }
        let entry = solve_entry(obstacles, canonical.word(), prec)?;
        self.record(entry.clone())?;
        Ok(entry)
    }

    /// Marked length spectrum: the length of the unique orbit marked by the
    /// word, invariant under rotation and reversal of the word.
    pub fn mls(
        &mut self,
        obstacles: &[ConvexObstacle],
        word: &Word,
        prec: u32,
    ) -> Result<Float, Error> {
        let entry = self.ensure(obstacles, word, prec)?;
        let full = parse_decimal(entry.precision_bits, &entry.length)
            .ok_or_else(|| Error::StoreFormat(format!("bad decimal for {}", entry.word)))?;
        Ok(round_to(&full, prec))
    }

    /// Marked Lyapunov spectrum: log of the expanding monodromy eigenvalue
    /// divided by the period.
    pub fn mlyap(
        &mut self,
        obstacles: &[ConvexObstacle],
        word: &Word,
        prec: u32,
    ) -> Result<Float, Error> {
        let entry = self.ensure(obstacles, word, prec)?;
        let full = parse_decimal(entry.precision_bits, &entry.le)
            .ok_or_else(|| Error::StoreFormat(format!("bad decimal for {}", entry.word)))?;
        Ok(round_to(&full, prec))
    }

    /// Computes a whole word family, persisting every length. Solves run in
    /// parallel; records are appended in n order so the file bytes do not
    /// depend on the degree of parallelism.
    pub fn batch_family(
        &mut self,
        obstacles: &[ConvexObstacle],
        spec: &FamilySpec,
    ) -> Result<Vec<FamilyRow>, Error> {
        // Coarse contraction rate of sigma, for the per-n precision ladder.
        let opts = SolveOptions::default();
        let sigma_orbit = solve_periodic(obstacles, &spec.sigma, 64, &opts)?;
        let lam_hat = sigma_orbit
            .monodromy(obstacles, 64)?
            .lambda
            .to_f64()
            .abs();
        let bits_per_step = -lam_hat.log2();
        let ladder = |n: usize| -> Result<u32, Error> {
            let need = 64.0 + (n as f64 * bits_per_step).ceil() + 40.0;
            let p = (need as u32).max(spec.base_precision);
            if p > MAX_PREC {
                return Err(Error::PrecisionUnavailable(p, MAX_PREC));
            }
            Ok(p)
        };

        // The deficit a_n subtracts a multiple of L(sigma), so sigma itself
        // is cached at the top of the ladder.
        let prec_top = ladder(spec.n_max)?;
        self.ensure(obstacles, &spec.sigma, prec_top)?;

        // Split cached from to-solve before going parallel.
        let mut plan: Vec<(usize, Word, u32, Option<SpectrumEntry>)> = Vec::new();
        for n in spec.n_min..=spec.n_max {
            let word = spec.word(n)?;
            let prec = ladder(n)?;
            let key = word.canonicalize().to_string();
            let cached = self
                .entries
                .get(&key)
                .filter(|e| e.precision_bits >= prec)
                .cloned();
            plan.push((n, word, prec, cached));
        }
        let solved: Result<Vec<(usize, Word, SpectrumEntry)>, Error> = plan
            .par_iter()
            .map(|(n, word, prec, cached)| {
                let entry = match cached {
                    Some(e) => e.clone(),
                    None => solve_entry(obstacles, word.canonicalize().word(), *prec)?,
                };
                Ok((*n, word.clone(), entry))
            })
            .collect();
        let solved = solved?;

        let mut rows = Vec::with_capacity(solved.len());
        for (n, word, entry) in solved {
            self.record(entry.clone())?;
            let length = parse_decimal(entry.precision_bits, &entry.length)
                .ok_or_else(|| Error::StoreFormat(format!("bad decimal for {}", entry.word)))?;
            rows.push(FamilyRow {
                n,
                word,
                length,
                precision: entry.precision_bits,
            });
        }
        Ok(rows)
    }

    /// CSV rows `word,n,length,deficit` for a computed family, where the
    /// deficit is length minus the family multiplier times the sigma length.
    /// All values come from the cache; missing words are an error.
    pub fn family_csv(&self, spec: &FamilySpec) -> Result<String, Error> {
        let sigma_entry = self
            .get(&spec.sigma)
            .ok_or_else(|| Error::InsufficientData(format!("sigma {} not cached", spec.sigma)))?;
        let out_prec = sigma_entry.precision_bits;
        let sigma_len = parse_decimal(out_prec, &sigma_entry.length)
            .ok_or_else(|| Error::StoreFormat("bad sigma decimal".into()))?;
        let mut out = String::from("word,n,length,deficit\n");
        for n in spec.n_min..=spec.n_max {
            let word = spec.word(n)?;
            let entry = self
                .get(&word)
                .ok_or_else(|| Error::InsufficientData(format!("word {word} not cached")))?;
            let prec = entry.precision_bits.min(out_prec);
            let length = parse_decimal(entry.precision_bits, &entry.length)
                .ok_or_else(|| Error::StoreFormat(format!("bad decimal for {}", entry.word)))?;
            let mult = fl(prec, spec.multiplier(n) as f64);
            let deficit = (&length).clone() - (&sigma_len * &mult).complete(prec);
            out.push_str(&format!(
                "{},{},{},{}\n",
                word,
                n,
                to_decimal(&length),
                to_decimal(&deficit)
            ));
        }
        Ok(out)
    }
}

impl Drop for SpectrumStore {
    fn drop(&mut self) {
        if let Some(p) = &self.lock_path {
            let _ = std::fs::remove_file(p);
        }
    }
}

fn solve_entry(
    obstacles: &[ConvexObstacle],
    word: &Word,
    prec: u32,
) -> Result<SpectrumEntry, Error> {
    let orbit = solve_periodic(obstacles, word, prec, &SolveOptions::default())?;
    let mono = orbit.monodromy(obstacles, prec)?;
    let residual = if orbit.gradient_norm >= orbit.reflection_residual {
        orbit.gradient_norm.clone()
    } else {
        orbit.reflection_residual.clone()
    };
    Ok(SpectrumEntry {
        word: word.to_string(),
        length: to_decimal(&orbit.length),
        precision_bits: orbit.precision,
        le: to_decimal(&mono.le),
        residual: to_decimal(&residual),
    })
}

/// Which shadowing family to generate from a base word sigma.
#[derive(Clone, Debug)]
pub enum FamilyKind {
    /// (tau1 sigma0 | sigma^n): period 2n + 2, linear part (n + 1) L(sigma).
    TauSigmaN { tau1: u32 },
    /// (tau+ sigma^n tau- sigmabar^n): period 2np + 2, linear part 2n L(sigma).
    HnPrime { tau_minus: u32, tau_plus: u32 },
}

/// A word family request: base word, excursion symbols, n range, alphabet
/// size, and a floor on the per-n mantissa chosen by the precision ladder.
#[derive(Clone, Debug)]
pub struct FamilySpec {
    pub sigma: Word,
    pub kind: FamilyKind,
    pub n_min: usize,
    pub n_max: usize,
    pub alphabet: u32,
    pub base_precision: u32,
}

impl FamilySpec {
    pub fn word(&self, n: usize) -> Result<Word, Error> {
        match &self.kind {
            FamilyKind::TauSigmaN { tau1 } => build_tau_sigma_n(&self.sigma, *tau1, n, self.alphabet),
            FamilyKind::HnPrime {
                tau_minus,
                tau_plus,
            } => build_hn_general(&self.sigma, (*tau_minus, *tau_plus), n, self.alphabet),
        }
    }

    /// Coefficient of L(sigma) in the linear part of the family length.
    pub fn multiplier(&self, n: usize) -> usize {
        match &self.kind {
            FamilyKind::TauSigmaN { .. } => n + 1,
            FamilyKind::HnPrime { .. } => 2 * n,
        }
    }
}

/// One computed family member, in n order.
#[derive(Clone, Debug)]
pub struct FamilyRow {
    pub n: usize,
    pub word: Word,
    pub length: Float,
    pub precision: u32,
}
