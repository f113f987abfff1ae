//! On-disk formats shared by the CLI subcommands.
//!
//! `cubes.json` stores a decomposition as cube ids (`"level:a1,a2"`):
//!
//! ```json
//! {"params": {"n": 1, "s": 1.5, "p": 4}, "sites": [[0.0]], "domain_exp": 4, "max_level": 8,
//!  "cubes": ["0:10", "1:19"], "anchors": {"0:10": [0.0], "1:19": [0.0]}, "fringe": ["8:2560"]}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use whitney_core::{DyadicCube, Error, Result, SpaceParams, Whitney};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubesFile {
    pub params: SpaceParams,
    pub sites: Vec<Vec<f64>>,
    pub domain_exp: i32,
    pub max_level: i32,
    pub cubes: Vec<String>,
    pub anchors: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub fringe: Vec<String>,
}

impl CubesFile {
    pub fn from_decomposition(w: &Whitney) -> Self {
        let mut cubes = Vec::with_capacity(w.len());
        let mut anchors = BTreeMap::new();
        for (q, a) in w.cubes() {
            let id = q.id();
            anchors.insert(id.clone(), w.sites().point(a as usize).to_vec());
            cubes.push(id);
        }
        let fringe = (0..w.fringe().len()).map(|i| w.fringe().cube(i).id()).collect();
        CubesFile {
            params: *w.params(),
            sites: w.sites().points().to_vec(),
            domain_exp: w.domain_exp(),
            max_level: w.max_level(),
            cubes,
            anchors,
            fringe,
        }
    }

    pub fn to_decomposition(&self) -> Result<Whitney> {
        let cubes = self
            .cubes
            .iter()
            .map(|id| {
                let q: DyadicCube = id.parse()?;
                let a = self.anchors.get(id).ok_or_else(|| Error::Invalid(format!("cube {id} has no anchor")))?;
                Ok((q, a.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let fringe = self.fringe.iter().map(|id| id.parse()).collect::<Result<Vec<DyadicCube>>>()?;
        Whitney::from_parts(self.params, &self.sites, self.domain_exp, self.max_level, &cubes, &fringe)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Site list, optionally with the space parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SitesFile {
    WithParams { params: SpaceParams, points: Vec<Vec<f64>> },
    Points(Vec<Vec<f64>>),
}

/// Parse a CSV of query points (one point per line, optional header).
pub fn read_points_csv(text: &str, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match parsed {
            Ok(p) if p.len() == n => out.push(p),
            Ok(p) => return Err(Error::DimensionMismatch { expected: n, got: p.len() }),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Invalid(format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

/// Write rows of numbers with a header.
pub fn write_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubes_file_round_trip() {
        let w = Whitney::build(SpaceParams::new(1, 1.5, 4.0).unwrap(), &[vec![0.0], vec![0.5]], 2, 6).unwrap();
        let f = CubesFile::from_decomposition(&w);
        let back = f.to_decomposition().unwrap();
        assert_eq!(back.len(), w.len());
        assert_eq!(back.cubes().collect::<Vec<_>>(), w.cubes().collect::<Vec<_>>());
        let json = serde_json::to_string(&f).unwrap();
        let again: CubesFile = serde_json::from_str(&json).unwrap();
        assert_eq!(again.cubes, f.cubes);
    }

    #[test]
    fn csv_skips_header() {
        let pts = read_points_csv("x,y\n1,2\n3.5, -1\n", 2).unwrap();
        assert_eq!(pts, vec![vec![1.0, 2.0], vec![3.5, -1.0]]);
        assert!(read_points_csv("1,2,3\n", 2).is_err());
    }
}
