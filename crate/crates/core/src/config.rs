//! Case files: flat `key = value` pairs grouped in `[section]`s, `#` comments.
//!
//! ```text
//! [mesh]
//! dim = 2
//! h = 0.2
//!
//! [levelset]
//! type = plane
//! point = 0 0.5
//! normal = 0 1
//!
//! [materials]
//! q = 3
//!
//! [boundary]
//! bottom = dirichlet 0
//! top = dirichlet 1
//! left = neumann
//! right = neumann
//!
//! [line.vertical]
//! start = 0.5 0
//! end = 0.5 1
//! ```
//!
//! See the bundled `cases/` directory for every recognised key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::assembly::Mode;
use crate::mesh::{BoundaryKind, BoundaryTag, Point};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing [{section}] {key}")]
    Missing { section: String, key: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("[{section}] {key} (line {line}): {message}")]
    Invalid {
        section: String,
        key: String,
        line: usize,
        message: String,
    },
    #[error("cannot read case file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Raw sections in file order.
#[derive(Debug, Clone, Default, PartialEq)]
struct Ini {
    sections: Vec<(String, BTreeMap<String, Entry>)>,
}

impl Ini {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut ini = Ini::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim().to_string();
                if ini.sections.iter().any(|(n, _)| *n == name) {
                    return Err(ConfigError::Syntax {
                        line,
                        message: format!("section [{name}] repeated"),
                    });
                }
                ini.sections.push((name, BTreeMap::new()));
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected 'key = value', found '{content}'"),
            })?;
            let Some((_, map)) = ini.sections.last_mut() else {
                return Err(ConfigError::Syntax {
                    line,
                    message: "key outside of any section".into(),
                });
            };
            let key = key.trim().to_string();
            if map.contains_key(&key) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("key '{key}' repeated"),
                });
            }
            map.insert(
                key,
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        Ok(ini)
    }

    fn section(&self, name: &str) -> Option<Section<'_>> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(n, map)| Section { name: n, map })
    }

    fn require(&self, name: &str) -> Result<Section<'_>, ConfigError> {
        self.section(name)
            .ok_or_else(|| ConfigError::MissingSection(name.into()))
    }
}

#[derive(Clone, Copy)]
struct Section<'a> {
    name: &'a str,
    map: &'a BTreeMap<String, Entry>,
}

impl<'a> Section<'a> {
    fn raw(&self, key: &str) -> Option<&'a Entry> {
        self.map.get(key)
    }

    fn invalid(&self, key: &str, line: usize, message: impl ToString) -> ConfigError {
        ConfigError::Invalid {
            section: self.name.into(),
            key: key.into(),
            line,
            message: message.to_string(),
        }
    }

    fn missing(&self, key: &str) -> ConfigError {
        ConfigError::Missing {
            section: self.name.into(),
            key: key.into(),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: ToString,
    {
        self.raw(key)
            .map(|e| {
                e.value
                    .parse::<T>()
                    .map_err(|err| self.invalid(key, e.line, err))
            })
            .transpose()
    }

    fn need<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: ToString,
    {
        self.get(key)?.ok_or_else(|| self.missing(key))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.raw(key)
            .map(|e| {
                e.value
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|err| self.invalid(key, e.line, err))
                    })
                    .collect()
            })
            .transpose()
    }

    fn point(&self, key: &str, dim: usize) -> Result<Option<Point>, ConfigError> {
        let Some(v) = self.list(key)? else {
            return Ok(None);
        };
        if v.len() != dim {
            let line = self.raw(key).map_or(0, |e| e.line);
            return Err(self.invalid(
                key,
                line,
                format!("expected {dim} coordinates, found {}", v.len()),
            ));
        }
        let mut p = Point::zeros();
        for (a, x) in v.iter().enumerate() {
            p[a] = *x;
        }
        Ok(Some(p))
    }

    fn need_point(&self, key: &str, dim: usize) -> Result<Point, ConfigError> {
        self.point(key, dim)?.ok_or_else(|| self.missing(key))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    /// Structured simplex mesh of a box with `cells` divisions per axis.
    Structured {
        cells: usize,
        lo: Point,
        hi: Point,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevelSetSpec {
    Plane {
        point: Point,
        normal: Point,
    },
    Circle {
        center: Point,
        radius: f64,
    },
    Sphere {
        center: Point,
        radius: f64,
    },
    /// One value per mesh node, whitespace separated.
    Nodal(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSpec {
    Planar {
        q: f64,
        y0: f64,
    },
    Sphere {
        q: f64,
        radius: f64,
        center: Point,
        offset: f64,
    },
    Cylinder2d {
        q: f64,
        radius: f64,
        center: Point,
        offset: f64,
    },
    /// Standard FEM on a structured mesh that conforms to the interface.
    Conforming {
        cells: usize,
        tol: f64,
    },
    /// Enriched solve with displacement terms on a finer mesh.
    SelfEfem {
        h: f64,
        tol: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSpec {
    pub name: String,
    pub start: Point,
    pub end: Point,
    pub samples: usize,
    pub csv: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseConfig {
    pub name: String,
    pub dim: usize,
    pub mesh: MeshSpec,
    /// Element size the structured mesh was derived from, if given.
    pub h: Option<f64>,
    pub levelset: LevelSetSpec,
    /// Permittivity on the positive and negative side of the level set.
    pub eps1: f64,
    pub eps2: f64,
    pub boundary: Vec<BoundaryTag>,
    pub mode: Mode,
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub direct: bool,
    pub threads: usize,
    pub d_on_boundary: bool,
    pub reference: Option<ReferenceSpec>,
    pub lines: Vec<LineSpec>,
    pub vtk: bool,
    pub h_list: Vec<f64>,
    pub modes: Vec<Mode>,
}

fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

fn parse_modes(s: &Section, key: &str) -> Result<Option<Vec<Mode>>, ConfigError> {
    s.raw(key)
        .map(|e| {
            e.value
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|m| !m.is_empty())
                .map(|m| m.parse::<Mode>().map_err(|err| s.invalid(key, e.line, err)))
                .collect()
        })
        .transpose()
}

impl CaseConfig {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "case".into());
        Self::parse_with_base(&text, &name, path.parent())
    }

    pub fn parse(text: &str, name: &str) -> Result<Self, ConfigError> {
        Self::parse_with_base(text, name, None)
    }

    fn parse_with_base(text: &str, name: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let ini = Ini::parse(text)?;

        let mesh_s = ini.require("mesh")?;
        let dim: usize = mesh_s.need("dim")?;
        if dim != 2 && dim != 3 {
            let line = mesh_s.raw("dim").map_or(0, |e| e.line);
            return Err(mesh_s.invalid("dim", line, "must be 2 or 3"));
        }
        let h: Option<f64> = mesh_s.get("h")?;
        let cells: Option<usize> = mesh_s.get("cells")?;
        let file: Option<String> = mesh_s.get("file")?;
        let given = [h.is_some() || cells.is_some(), file.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(ConfigError::Invalid {
                section: "mesh".into(),
                key: "h|cells|file".into(),
                line: 0,
                message: "give exactly one of a structured size (h or cells) or a mesh file".into(),
            });
        }
        let mesh = match file {
            Some(f) => MeshSpec::File(resolve(base, &f)),
            None => {
                let cells = match (cells, h) {
                    (Some(c), _) => c,
                    (None, Some(h)) => {
                        if !(h > 0.0) {
                            let line = mesh_s.raw("h").map_or(0, |e| e.line);
                            return Err(mesh_s.invalid("h", line, "must be positive"));
                        }
                        crate::mesh::cells_for_h(h)
                    }
                    (None, None) => unreachable!(),
                };
                let lo = mesh_s.point("lo", dim)?.unwrap_or_else(Point::zeros);
                let mut unit = Point::zeros();
                for a in 0..dim {
                    unit[a] = 1.0;
                }
                let hi = mesh_s.point("hi", dim)?.unwrap_or(unit);
                MeshSpec::Structured { cells, lo, hi }
            }
        };

        let ls = ini.require("levelset")?;
        let kind: String = ls.need("type")?;
        let levelset = match kind.as_str() {
            "plane" => LevelSetSpec::Plane {
                point: ls.need_point("point", dim)?,
                normal: ls.need_point("normal", dim)?,
            },
            "circle" => LevelSetSpec::Circle {
                center: ls.need_point("center", dim)?,
                radius: ls.need("radius")?,
            },
            "sphere" => LevelSetSpec::Sphere {
                center: ls.need_point("center", dim)?,
                radius: ls.need("radius")?,
            },
            "nodal" => LevelSetSpec::Nodal(resolve(base, &ls.need::<String>("file")?)),
            other => {
                let line = ls.raw("type").map_or(0, |e| e.line);
                return Err(ls.invalid("type", line, format!("unknown level set '{other}'")));
            }
        };

        let mat = ini.require("materials")?;
        let (eps1, eps2) = match (
            mat.get::<f64>("q")?,
            mat.get::<f64>("eps1")?,
            mat.get::<f64>("eps2")?,
        ) {
            (Some(q), None, None) => (q, 1.0),
            (None, Some(a), Some(b)) => (a, b),
            (None, None, None) => return Err(mat.missing("q")),
            _ => {
                return Err(ConfigError::Invalid {
                    section: "materials".into(),
                    key: "q|eps1|eps2".into(),
                    line: 0,
                    message: "give either q or both eps1 and eps2".into(),
                })
            }
        };
        for (key, v) in [("eps1", eps1), ("eps2", eps2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid {
                    section: "materials".into(),
                    key: key.into(),
                    line: 0,
                    message: format!("permittivity must be positive, got {v}"),
                });
            }
        }

        let bs = ini.require("boundary")?;
        let mut boundary = Vec::new();
        for (tag, entry) in bs.map {
            let mut words = entry.value.split_whitespace();
            let kind = match words.next() {
                Some("neumann") => BoundaryKind::NeumannZero,
                Some("dirichlet") => {
                    let v = words
                        .next()
                        .ok_or_else(|| bs.invalid(tag, entry.line, "dirichlet needs a value"))?
                        .parse::<f64>()
                        .map_err(|e| bs.invalid(tag, entry.line, e))?;
                    BoundaryKind::Dirichlet(v)
                }
                _ => {
                    return Err(bs.invalid(
                        tag,
                        entry.line,
                        "expected 'dirichlet <value>' or 'neumann'",
                    ))
                }
            };
            boundary.push(BoundaryTag {
                name: tag.clone(),
                kind,
            });
        }
        // Dirichlet tags first so they claim shared corner nodes.
        boundary.sort_by_key(|b| matches!(b.kind, BoundaryKind::NeumannZero));

        let empty = BTreeMap::new();
        let solver = ini.section("solver").unwrap_or(Section {
            name: "solver",
            map: &empty,
        });
        let mode = solver.get::<Mode>("mode")?.unwrap_or(Mode::Efem);
        let tol = solver.get::<f64>("tol")?.unwrap_or(1e-8);
        let max_iter = solver.get::<usize>("max_iter")?;
        let direct = solver.get::<bool>("direct")?.unwrap_or(false);
        let threads = solver.get::<usize>("threads")?.unwrap_or(1).max(1);
        let d_on_boundary = solver.get::<bool>("d_on_boundary")?.unwrap_or(true);

        let reference = match ini.section("reference") {
            None => None,
            Some(r) => {
                let kind: String = r.need("type")?;
                let q = || r.need::<f64>("q");
                Some(match kind.as_str() {
                    "planar" => ReferenceSpec::Planar {
                        q: q()?,
                        y0: r.get("y0")?.unwrap_or(0.5),
                    },
                    "sphere" => ReferenceSpec::Sphere {
                        q: q()?,
                        radius: r.need("radius")?,
                        center: r.need_point("center", 3)?,
                        offset: r.get("offset")?.unwrap_or(0.5),
                    },
                    "cylinder2d" => ReferenceSpec::Cylinder2d {
                        q: q()?,
                        radius: r.need("radius")?,
                        center: r.need_point("center", 2)?,
                        offset: r.get("offset")?.unwrap_or(0.5),
                    },
                    "conforming" => ReferenceSpec::Conforming {
                        cells: r.need("cells")?,
                        tol: r.get("tol")?.unwrap_or(1e-10),
                    },
                    "self" => ReferenceSpec::SelfEfem {
                        h: r.need("h")?,
                        tol: r.get("tol")?.unwrap_or(1e-10),
                    },
                    other => {
                        let line = r.raw("type").map_or(0, |e| e.line);
                        return Err(r.invalid(
                            "type",
                            line,
                            format!("unknown reference '{other}'"),
                        ));
                    }
                })
            }
        };

        let mut lines = Vec::new();
        for (section, _) in &ini.sections {
            let Some(line_name) = section.strip_prefix("line.") else {
                continue;
            };
            let s = ini.section(section).expect("listed");
            lines.push(LineSpec {
                name: line_name.to_string(),
                start: s.need_point("start", dim)?,
                end: s.need_point("end", dim)?,
                samples: s.get("samples")?.unwrap_or(1001),
                csv: s.get("csv")?.unwrap_or(true),
            });
        }

        let output = ini.section("output");
        let vtk = match output {
            Some(o) => o.get::<bool>("vtk")?.unwrap_or(false),
            None => false,
        };

        let conv = ini.section("convergence");
        let (h_list, modes) = match conv {
            Some(c) => (
                c.list("h_list")?.unwrap_or_default(),
                parse_modes(&c, "modes")?.unwrap_or_else(|| Mode::ALL.to_vec()),
            ),
            None => (Vec::new(), Mode::ALL.to_vec()),
        };

        Ok(CaseConfig {
            name: name.to_string(),
            dim,
            mesh,
            h,
            levelset,
            eps1,
            eps2,
            boundary,
            mode,
            tol,
            max_iter,
            direct,
            threads,
            d_on_boundary,
            reference,
            lines,
            vtk,
            h_list,
            modes,
        })
    }

    /// Replaces the structured mesh size.
    pub fn set_h(&mut self, h: f64) {
        if let MeshSpec::Structured { cells, .. } = &mut self.mesh {
            *cells = crate::mesh::cells_for_h(h);
        } else {
            self.mesh = MeshSpec::Structured {
                cells: crate::mesh::cells_for_h(h),
                lo: Point::zeros(),
                hi: Point::new(1.0, 1.0, if self.dim == 3 { 1.0 } else { 0.0 }),
            };
        }
        self.h = Some(h);
    }
}
