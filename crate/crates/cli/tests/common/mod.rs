//! Input fixtures and a runner for the `xmr` binary.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use xmr_core::simgen::write_sim;
use xmr_core::{generate, SimSpec};

pub fn xmr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run xmr")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Data lines of a report, without `#` metadata.
pub fn body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

pub fn sim_spec(seed: u64) -> SimSpec {
    SimSpec {
        n_snps: 30,
        k_exposures: 3,
        true_alpha: vec![0.3, -0.2, 0.1],
        ld_rho: 0.3,
        n_gwas: 1e5,
        n_qtl: 1e5,
        pleiotropy_sd: 0.0,
        seed,
    }
}

/// Writes `<dir>/<name>.*` simulation files.
pub fn write_sim_stem(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let stem = dir.join(name);
    write_sim(&stem, &generate(&sim_spec(seed)).unwrap(), None).unwrap();
    stem
}

const ASSOC_HEADER: &str = "SNP\tCHR\tBP\tA1\tA2\tBETA\tSE\tP";

fn row(s: &mut String, rsid: &str, chrom: &str, pos: u64, beta: f64, se: f64, p: f64) {
    write!(s, "{rsid}\t{chrom}\t{pos}\tA\tG\t{beta}\t{se}\t{p}").unwrap();
}

/// Six proteins on chromosomes 1-6 (TSS at 10 Mb), each with three cis and
/// two trans pQTLs, a SNP shared by all six, an MHC SNP for P6 and a weak
/// association. Writes pqtl.tsv, outcome.tsv, annotation.tsv, groups.tsv.
pub fn write_pqtl_fixture(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut panel = format!("{ASSOC_HEADER}\tPROTEIN\n");
    let mut outcome = format!("{ASSOC_HEADER}\n");
    let mut ann = String::from("gene\tchrom\ttss\tprotein\n");
    let mut push = |panel: &mut String,
                    outcome: &mut String,
                    rsid: &str,
                    chrom: &str,
                    pos: u64,
                    protein: &str,
                    beta: f64,
                    p: f64,
                    effect: f64| {
        row(panel, rsid, chrom, pos, beta, 0.01, p);
        writeln!(panel, "\t{protein}").unwrap();
        if !outcome.contains(&format!("\n{rsid}\t")) {
            let noise: f64 = rng.sample(StandardNormal);
            row(
                outcome,
                rsid,
                chrom,
                pos,
                effect * beta + 0.005 * noise,
                0.01,
                1e-3,
            );
            outcome.push('\n');
        }
    };
    for (i, protein) in ["P1", "P2", "P3", "P4", "P5", "P6"].iter().enumerate() {
        let chrom = (i + 1).to_string();
        writeln!(ann, "GENE{}\t{chrom}\t10000000\t{protein}", i + 1).unwrap();
        let effect = 0.1 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 };
        for j in 0..3u64 {
            let rsid = format!("rs{protein}c{j}");
            push(
                &mut panel,
                &mut outcome,
                &rsid,
                &chrom,
                9_800_000 + j * 200_000,
                protein,
                0.2 + 0.05 * j as f64,
                1e-30,
                effect,
            );
        }
        for j in 0..2u64 {
            let rsid = format!("rs{protein}t{j}");
            push(
                &mut panel,
                &mut outcome,
                &rsid,
                &(13 + j).to_string(),
                1_000_000 * (i as u64 + 1),
                protein,
                0.15,
                1e-20,
                effect,
            );
        }
        push(
            &mut panel,
            &mut outcome,
            "rsShared",
            "20",
            5_000_000,
            protein,
            0.1,
            1e-25,
            effect,
        );
        push(
            &mut panel,
            &mut outcome,
            &format!("rs{protein}weak"),
            &chrom,
            20_000_000,
            protein,
            0.01,
            0.01,
            effect,
        );
    }
    push(
        &mut panel,
        &mut outcome,
        "rsMHC",
        "6",
        30_000_000,
        "P6",
        0.3,
        1e-40,
        0.0,
    );
    fs::write(dir.join("pqtl.tsv"), panel).unwrap();
    fs::write(dir.join("outcome.tsv"), outcome).unwrap();
    fs::write(dir.join("annotation.tsv"), ann).unwrap();
    fs::write(dir.join("groups.tsv"), "pathway\tP1,P2,P3,P4,P5,P6\n").unwrap();
}

/// Exposure, three CpG sites and an outcome. cg1 mediates (both steps
/// strong), cg2 has no exposure effect, cg3 no outcome effect.
/// Writes exposure.tsv, methylation.tsv, med_outcome.tsv.
pub fn write_mediation_fixture(dir: &Path) {
    let mut exposure = format!("{ASSOC_HEADER}\n");
    let mut methyl = format!("{ASSOC_HEADER}\tCPG\n");
    let mut outcome = format!("{ASSOC_HEADER}\n");
    let exp_snps: Vec<(String, f64)> = (0..5)
        .map(|i| (format!("rsE{i}"), 0.1 + 0.02 * i as f64))
        .collect();
    for (i, (rsid, b)) in exp_snps.iter().enumerate() {
        row(
            &mut exposure,
            rsid,
            "2",
            1_000_000 + i as u64 * 500_000,
            *b,
            0.005,
            1e-12,
        );
        exposure.push('\n');
    }
    for (c, (step1, step2)) in [
        ("cg1", (0.5, 0.4)),
        ("cg2", (0.0, 0.4)),
        ("cg3", (0.5, 0.0)),
    ] {
        for (i, (rsid, b)) in exp_snps.iter().enumerate() {
            let wobble = if i % 2 == 0 { 0.002 } else { -0.002 };
            row(
                &mut methyl,
                rsid,
                "2",
                1_000_000 + i as u64 * 500_000,
                step1 * b + wobble,
                0.01,
                0.5,
            );
            writeln!(methyl, "\t{c}").unwrap();
        }
        for j in 0..4u64 {
            let rsid = format!("rs{c}m{j}");
            let b = 0.2 + 0.03 * j as f64;
            row(&mut methyl, &rsid, "8", 100_000 * (j + 1), b, 0.01, 1e-15);
            writeln!(methyl, "\t{c}").unwrap();
            let wobble = if j % 2 == 0 { 0.001 } else { -0.001 };
            row(
                &mut outcome,
                &rsid,
                "8",
                100_000 * (j + 1),
                step2 * b + wobble,
                0.005,
                0.5,
            );
            outcome.push('\n');
        }
    }
    fs::write(dir.join("exposure.tsv"), exposure).unwrap();
    fs::write(dir.join("methylation.tsv"), methyl).unwrap();
    fs::write(dir.join("med_outcome.tsv"), outcome).unwrap();
}

/// `SNP <k exposures> BETA_Y SE_Y` with two causal exposures.
pub fn write_bma_fixture(path: &Path, k: usize, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::from("SNP");
    for j in 0..k {
        write!(s, "\tX{j}").unwrap();
    }
    s.push_str("\tBETA_Y\tSE_Y\n");
    for i in 0..n {
        let x: Vec<f64> = (0..k)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.1)
            .collect();
        let noise: f64 = rng.sample(StandardNormal);
        let y = 0.4 * x[0] - 0.3 * x[1.min(k - 1)] + 0.01 * noise;
        write!(s, "rs{i}").unwrap();
        for v in &x {
            write!(s, "\t{v}").unwrap();
        }
        writeln!(s, "\t{y}\t0.01").unwrap();
    }
    fs::write(path, s).unwrap();
}

/// Long-format eQTL panel built from simulation tables (GENE column).
pub fn write_eqtl_panel(dir: &Path, stem: &Path, genes: &[&str]) -> PathBuf {
    let mut panel = String::new();
    for (g, gene) in genes.iter().enumerate() {
        let text = fs::read_to_string(format!("{}.{gene}.tsv", stem.display())).unwrap();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if g == 0 {
                    writeln!(panel, "{line}\tGENE").unwrap();
                }
                continue;
            }
            writeln!(panel, "{line}\t{gene}").unwrap();
        }
    }
    let path = dir.join("eqtl.tsv");
    fs::write(&path, panel).unwrap();
    let snps: String = (1..=30).map(|i| format!("rs{i}\n")).collect();
    fs::write(dir.join("ld_snps.txt"), snps).unwrap();
    path
}
