//! Test functions evaluated on single states or on mother-daughters triangles.

use std::fmt;
use std::sync::Arc;

use crate::error::{BmcError, Result};

pub type SingleFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type TriangleFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalKind {
    Single,
    Triangle,
}

/// A real function on `S` (single) or `S^3` (triangle).
///
/// Finite-state functionals also carry their value table: `m` entries for a
/// single functional, `m^3` entries indexed `x*m*m + y*m + z` for a triangle
/// one. States of a finite chain are stored as the reals `0.0, 1.0, ...`.
#[derive(Clone)]
pub enum Functional {
    Single {
        name: String,
        eval: SingleFn,
        table: Option<Vec<f64>>,
    },
    Triangle {
        name: String,
        eval: TriangleFn,
        table: Option<Vec<f64>>,
    },
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional")
            .field("name", &self.name())
            .field("kind", &self.kind())
            .field("table", &self.table())
            .finish()
    }
}

impl Functional {
    pub fn single(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Functional::Single {
            name: name.into(),
            eval: Arc::new(f),
            table: None,
        }
    }

    pub fn triangle(
        name: impl Into<String>,
        f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Functional::Triangle {
            name: name.into(),
            eval: Arc::new(f),
            table: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Functional::single(format!("const({c})"), move |_| c)
    }

    /// Single functional on `{0, .., m-1}` given by its values.
    pub fn single_table(values: Vec<f64>) -> Self {
        let lookup = values.clone();
        Functional::Single {
            name: "table".into(),
            eval: Arc::new(move |x| lookup[x as usize]),
            table: Some(values),
        }
    }

    /// Triangle functional on `{0, .., m-1}^3`, values indexed `x*m*m + y*m + z`.
    pub fn triangle_table(m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * m * m {
            return Err(BmcError::LengthMismatch(format!(
                "triangle table needs {} entries, got {}",
                m * m * m,
                values.len()
            )));
        }
        let lookup = values.clone();
        Ok(Functional::Triangle {
            name: "table".into(),
            eval: Arc::new(move |x, y, z| {
                lookup[(x as usize * m + y as usize) * m + z as usize]
            }),
            table: Some(values),
        })
    }

    pub fn with_name(mut self, new_name: impl Into<String>) -> Self {
        match &mut self {
            Functional::Single { name, .. } | Functional::Triangle { name, .. } => {
                *name = new_name.into()
            }
        }
        self
    }

    pub fn name(&self) -> &str {
        match self {
            Functional::Single { name, .. } | Functional::Triangle { name, .. } => name,
        }
    }

    pub fn kind(&self) -> FunctionalKind {
        match self {
            Functional::Single { .. } => FunctionalKind::Single,
            Functional::Triangle { .. } => FunctionalKind::Triangle,
        }
    }

    pub fn table(&self) -> Option<&[f64]> {
        match self {
            Functional::Single { table, .. } | Functional::Triangle { table, .. } => {
                table.as_deref()
            }
        }
    }

    pub fn expect_kind(&self, kind: FunctionalKind) -> Result<()> {
        if self.kind() == kind {
            Ok(())
        } else {
            Err(BmcError::FunctionalKind(format!(
                "`{}` is {:?}, expected {:?}",
                self.name(),
                self.kind(),
                kind
            )))
        }
    }

    /// Evaluates a single functional. Panics on a triangle functional; use
    /// [`Functional::expect_kind`] first when the kind is not known.
    #[inline]
    pub fn eval1(&self, x: f64) -> f64 {
        match self {
            Functional::Single { eval, .. } => eval(x),
            Functional::Triangle { name, .. } => {
                panic!("triangle functional `{name}` evaluated at a single state")
            }
        }
    }

    #[inline]
    pub fn eval3(&self, x: f64, y: f64, z: f64) -> f64 {
        match self {
            Functional::Triangle { eval, .. } => eval(x, y, z),
            Functional::Single { name, .. } => {
                panic!("single functional `{name}` evaluated on a triangle")
            }
        }
    }

    /// `u * f` for a real `u`.
    pub fn scaled(&self, u: f64) -> Self {
        match self {
            Functional::Single { name, eval, table } => {
                let eval = eval.clone();
                Functional::Single {
                    name: format!("{u}*{name}"),
                    eval: Arc::new(move |x| u * eval(x)),
                    table: table.as_ref().map(|t| t.iter().map(|v| u * v).collect()),
                }
            }
            Functional::Triangle { name, eval, table } => {
                let eval = eval.clone();
                Functional::Triangle {
                    name: format!("{u}*{name}"),
                    eval: Arc::new(move |x, y, z| u * eval(x, y, z)),
                    table: table.as_ref().map(|t| t.iter().map(|v| u * v).collect()),
                }
            }
        }
    }

    /// `f - c` for a real `c`.
    pub fn shifted(&self, c: f64) -> Self {
        match self {
            Functional::Single { name, eval, table } => {
                let eval = eval.clone();
                Functional::Single {
                    name: format!("{name}-{c}"),
                    eval: Arc::new(move |x| eval(x) - c),
                    table: table.as_ref().map(|t| t.iter().map(|v| v - c).collect()),
                }
            }
            Functional::Triangle { name, eval, table } => {
                let eval = eval.clone();
                Functional::Triangle {
                    name: format!("{name}-{c}"),
                    eval: Arc::new(move |x, y, z| eval(x, y, z) - c),
                    table: table.as_ref().map(|t| t.iter().map(|v| v - c).collect()),
                }
            }
        }
    }
}
