//! Reference external method for the workdir protocol.
//!
//! Usage: `hb-loopback-adapter [--mode upsample|garbage|fail] <workdir>`
//!
//! Re-reads every protocol file, checks the shapes against `meta.json` and
//! the operator invariants (unit-sum SRF rows and PSF), then writes a
//! bilinear upsample of `lr_hsi.npy` as `recon.npy`. The `garbage` mode
//! writes a mis-shaped reconstruction and `fail` exits with status 1; both
//! exist to exercise the runner's failure handling.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context};
use serde_json::Value;

use hyperbench::io::{npy, read_cube, write_cube_npy, Dtype};
use hyperbench::method::{bilinear_upsample, PROTOCOL_VERSION};

fn meta_usize(meta: &Value, key: &str) -> anyhow::Result<usize> {
    meta.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .with_context(|| format!("meta.json: missing integer `{key}`"))
}

fn load_npy(dir: &Path, name: &str) -> anyhow::Result<npy::NpyArray> {
    npy::read_npy(&dir.join(name)).with_context(|| format!("reading {name}"))
}

fn run(mode: &str, dir: &Path) -> anyhow::Result<()> {
    if mode == "fail" {
        bail!("failing on request");
    }
    let meta: Value = serde_json::from_slice(
        &std::fs::read(dir.join("meta.json")).context("reading meta.json")?,
    )
    .context("parsing meta.json")?;
    ensure!(meta["protocol"] == PROTOCOL_VERSION, "unexpected protocol {}", meta["protocol"]);
    let factor = meta_usize(&meta, "factor")?;
    let (h, w) = (meta_usize(&meta, "height")?, meta_usize(&meta, "width")?);
    let (big_c, c) = (meta_usize(&meta, "hsi_bands")?, meta_usize(&meta, "msi_bands")?);

    let lr = load_npy(dir, "lr_hsi.npy")?;
    ensure!(lr.shape == [h / factor, w / factor, big_c], "lr_hsi.npy shape {:?}", lr.shape);
    let msi = load_npy(dir, "hr_msi.npy")?;
    ensure!(msi.shape == [h, w, c], "hr_msi.npy shape {:?}", msi.shape);
    let srf = load_npy(dir, "srf.npy")?;
    ensure!(srf.shape == [c, big_c], "srf.npy shape {:?}", srf.shape);
    for (k, row) in srf.data.chunks_exact(big_c).enumerate() {
        let sum: f64 = row.iter().sum();
        ensure!((sum - 1.0).abs() < 1e-9, "srf.npy row {k} sums to {sum}");
    }
    let psf = load_npy(dir, "psf.npy")?;
    ensure!(psf.shape.len() == 2 && psf.shape[0] == psf.shape[1], "psf.npy shape {:?}", psf.shape);
    let psf_sum: f64 = psf.data.iter().sum();
    ensure!((psf_sum - 1.0).abs() < 1e-6, "psf.npy sums to {psf_sum}");
    let wl = meta["wavelengths_nm"].as_array().map_or(0, Vec::len);
    ensure!(wl == big_c, "meta.json lists {wl} wavelengths for {big_c} bands");

    let out = dir.join("recon.npy");
    if mode == "garbage" {
        return npy::write_npy(&out, &[1, 2, 3], &[0.0; 6], Dtype::F32).context("writing recon.npy");
    }
    let lr_cube = read_cube(&dir.join("lr_hsi.npy"))?;
    let recon = bilinear_upsample(&lr_cube, factor)?;
    write_cube_npy(&recon, &out, Dtype::F64).context("writing recon.npy")
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (mode, dir) = match args.as_slice() {
        [dir] => ("upsample", PathBuf::from(dir)),
        [flag, mode, dir] if flag == "--mode" => (mode.as_str(), PathBuf::from(dir)),
        _ => {
            eprintln!("usage: hb-loopback-adapter [--mode upsample|garbage|fail] <workdir>");
            return ExitCode::from(2);
        }
    };
    if !matches!(mode, "upsample" | "garbage" | "fail") {
        eprintln!("unknown mode `{mode}`");
        return ExitCode::from(2);
    }
    match run(mode, &dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hb-loopback-adapter: {e:#}");
            ExitCode::from(1)
        }
    }
}
