use std::path::{Path, PathBuf};
use std::process::Command;

use soc_core::cli::{self, RunConfig};
use soc_core::domain::Channel;

fn write_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    let text = format!(
        r#"model = "three-pool-biok"
site = "tarlee"
output = "sim"
[sampler]
iterations = 80
burn_in = 40
thin = 2
chains = 2
seed = 5
[soc]
particles = 16
[simulate]
seed = 3
carbon_fraction = 0.6
truth = {{ sigma2_etaC = 0.002, sigma2_etaB = 0.01, "X_C0[1]" = 40.0, "X_C0[2]" = 42.0, "X_C0[3]" = 38.0 }}
{extra}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn soc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_soc")).args(args).env("SOC_THREADS", "1").output().unwrap()
}

#[test]
fn simulate_fit_report_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "run.toml", "");
    let sim = RunConfig::load(&cfg_path).unwrap();
    cli::simulate(&sim).unwrap();
    for f in ["observations.csv", "schedule.csv", "truth.csv", "latent_toc.csv", "run_manifest.json"] {
        assert!(sim.output.join(f).exists(), "{f}");
    }

    // The synthetic files read back to the same dataset.
    let data = cli::ingest_dataset(&sim.output.join("observations.csv"), &sim.output.join("schedule.csv")).unwrap();
    let again = cli::read_observations(
        &sim.output.join("observations.csv"),
        data.fields().to_vec(),
        soc_core::soc::presets::tarlee(),
    )
    .unwrap();
    assert_eq!(data, again);
    cli::write_observations(&dir.path().join("copy.csv"), &data).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("copy.csv")).unwrap(),
        std::fs::read(sim.output.join("observations.csv")).unwrap()
    );

    let mut fit_cfg = sim.clone();
    fit_cfg.data = Some(sim.output.join("observations.csv"));
    fit_cfg.select = cli::SelectMethod::Waic;
    fit_cfg.output = dir.path().join("fit_a");
    cli::fit(&fit_cfg, false).unwrap();
    let csvs = ["posterior_theta.csv", "posterior_summary.csv", "trajectories_quantiles.csv", "rhat.csv", "waic.csv"];
    for f in csvs {
        assert!(fit_cfg.output.join(f).exists(), "{f}");
    }
    let rhat = std::fs::read_to_string(fit_cfg.output.join("rhat.csv")).unwrap();
    assert!(rhat.starts_with("parameter,rhat,upper_ci\n"));
    let waic = std::fs::read_to_string(fit_cfg.output.join("waic.csv")).unwrap();
    assert_eq!(waic.lines().count(), 4);

    // Rerun from the manifest alone into a fresh directory.
    let manifest = fit_cfg.output.join(cli::MANIFEST);
    let m = cli::Manifest::read(&manifest).unwrap();
    assert_eq!(m.status, "complete");
    assert_eq!(m.chain_seeds.len(), 2);
    let out_b = dir.path().join("fit_b");
    let o = soc(&["fit", "--config", manifest.to_str().unwrap(), "--output", out_b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in csvs {
        assert_eq!(std::fs::read(fit_cfg.output.join(f)).unwrap(), std::fs::read(out_b.join(f)).unwrap(), "{f}");
    }

    let o = soc(&["diagnose", "--config", manifest.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("K_C"));
    cli::report(&fit_cfg).unwrap();
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "model = \"seven-pool\"\nsite = \"tarlee\"\noutput = \"o\"\n").unwrap();
    assert_eq!(soc(&["fit", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let cfg = write_config(dir.path(), "run.toml", "");
    let obs = dir.path().join("obs.csv");
    std::fs::write(&obs, "field,year,channel,value\n1,1980,TOC,41.2\n2,1981,TOC,-3\n").unwrap();
    let o = soc(&["fit", "--config", cfg.to_str().unwrap(), "--data", obs.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    assert_eq!(soc(&["fit", "--config", dir.path().join("missing.toml").to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(soc(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn ingest_rules() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.csv");
    std::fs::write(&sched, "field,year,treatment\nA,1996,WheatGrain\nA,1997,Fallow\nB,1996,Pasture\nB,1997,Fallow\n").unwrap();
    let obs = dir.path().join("o.csv");
    std::fs::write(&obs, "field,year,channel,value\nA,1997,TOC,41.2\nB,1996,P,2.5\n").unwrap();
    let d = cli::ingest_dataset(&obs, &sched).unwrap();
    assert_eq!(d.get(0, 1, Channel::Toc), Some(41.2));
    assert_eq!(d.get(0, 0, Channel::Toc), None);
    assert_eq!(d.get(1, 0, Channel::Pasture), Some(2.5));
    assert_eq!(d.schedule().get(1, 1), soc_core::domain::Treatment::Fallow);

    for (body, line) in [
        ("field,year,channel,value\nA,1997,XYZ,1.0\n", 2),
        ("field,year,channel,value\nA,1997,TOC,1.0\nA,1997,TOC,2.0\n", 3),
        ("field,year,channel,value\nC,1997,TOC,1.0\n", 2),
        ("field,year,channel,value\nA,2001,TOC,1.0\n", 2),
        ("field,year,channel,value\nA,1997,TOC,0\n", 2),
    ] {
        std::fs::write(&obs, body).unwrap();
        match cli::ingest_dataset(&obs, &sched) {
            Err(soc_core::Error::Data { line: Some(l), .. }) => assert_eq!(l, line, "{body}"),
            other => panic!("{body}: {other:?}"),
        }
    }
    std::fs::write(&sched, "field,year,treatment\nA,1996,WheatGrain\nB,1997,Fallow\n").unwrap();
    assert!(cli::read_schedule(&sched).is_err());
}
