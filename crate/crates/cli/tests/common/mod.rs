#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flof_core::interpolation::DataKind;
use flof_core::pipeline::space::{DeformationEntry, SampleEntry, SpaceDescription};

pub const RES: usize = 32;
pub const FRAMES: usize = 6;
pub const REPEAT: usize = 2;
pub const EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (0, 2)];

pub fn flof(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_flof")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "flof {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three circle samples on a triangle of parameter space, matched pairwise
/// through the command line.
pub struct SpaceFixture {
    pub dir: tempfile::TempDir,
    pub space: PathBuf,
}

impl SpaceFixture {
    pub fn sdf(&self, k: usize) -> PathBuf {
        self.dir.path().join(format!("sdf{k}.flof"))
    }

    pub fn params(&self) -> PathBuf {
        self.dir.path().join("params.json")
    }

    pub fn match_dir(&self, a: usize, b: usize) -> PathBuf {
        self.dir.path().join(format!("match{a}{b}"))
    }
}

pub const SAMPLE_R: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
const OFFSETS: [f64; 3] = [0.0, 3.0, -2.0];

pub fn build_space() -> SpaceFixture {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    let (res, frames, repeat) = (RES.to_string(), FRAMES.to_string(), REPEAT.to_string());
    for (k, offset) in OFFSETS.iter().enumerate() {
        let frames_dir = base.join(format!("frames{k}"));
        let offset = offset.to_string();
        flof(&[
            "gen-scene", "--scene", "translating-circle", "--res", &res, "--frames", &frames, "--offset", &offset,
            "--out", s(&frames_dir),
        ]);
        let sdf = base.join(format!("sdf{k}.flof"));
        flof(&["build-sdf", "--in", s(&frames_dir), "--gamma", "12", "--repeat-first", &repeat, "--out", s(&sdf)]);
    }
    let params = base.join("params.json");
    fs::write(&params, r#"{ "gamma_max": 12.0, "beta_image": -0.016666666666666666 }"#).unwrap();
    let fixture = SpaceFixture {
        space: base.join("space.json"),
        dir,
    };
    let mut deformations = Vec::new();
    for (a, b) in EDGES {
        let out = fixture.match_dir(a, b);
        flof(&[
            "match", "--src", s(&fixture.sdf(a)), "--dst", s(&fixture.sdf(b)), "--params", s(&params), "--out", s(&out),
        ]);
        for (from, to, file) in [(a, b, "forward"), (b, a, "backward")] {
            deformations.push(DeformationEntry {
                from,
                to,
                file: format!("match{a}{b}/{file}.flof"),
            });
        }
    }
    let description = SpaceDescription {
        name: "circles".into(),
        kind: DataKind::LiquidSdf,
        frames_repeated: REPEAT,
        samples: (0..3)
            .map(|k| SampleEntry {
                name: format!("c{k}"),
                r: SAMPLE_R[k].to_vec(),
                data: format!("sdf{k}.flof"),
                sdf: None,
            })
            .collect(),
        simplices: vec![vec![0, 1, 2]],
        deformations,
    };
    description.write(&fixture.space).unwrap();
    fixture
}
