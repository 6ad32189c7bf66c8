//! Joint naming, bone topology and reference bone lengths.
//!
//! The default layout is the 17 MSCOCO body joints followed by three joints
//! per foot (big toe, small toe, heel). Indices are part of every file format
//! in this crate and must not be reordered.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_SCHEMA: &str = include_str!("../data/skeleton_default.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("bone {0} references joint outside 0..{1}")]
    JointOutOfRange(usize, usize),
    #[error("bones do not form a tree over the joints: {0}")]
    NotATree(String),
    #[error("bone {0}: reference length and deviation must be positive")]
    NonPositive(usize),
    #[error("expected {expected} entries in {field}, got {got}")]
    Length { field: &'static str, expected: usize, got: usize },
    #[error("invalid schema json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootGroups {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct SkeletonSchema {
    joint_names: Vec<String>,
    bones: Vec<(usize, usize)>,
    b_ref: Vec<f64>,
    sigma_bone: Vec<f64>,
    foot_indices: FootGroups,
    heel_indices: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    joint_names: Vec<String>,
    bones: Vec<(usize, usize)>,
    b_ref: Vec<f64>,
    sigma_bone: Vec<f64>,
    foot_indices: FootGroups,
    heel_indices: [usize; 2],
}

impl TryFrom<RawSchema> for SkeletonSchema {
    type Error = SchemaError;
    fn try_from(r: RawSchema) -> Result<Self, SchemaError> {
        SkeletonSchema::new(r.joint_names, r.bones, r.b_ref, r.sigma_bone, r.foot_indices, r.heel_indices)
    }
}

impl From<SkeletonSchema> for RawSchema {
    fn from(s: SkeletonSchema) -> Self {
        RawSchema {
            joint_names: s.joint_names,
            bones: s.bones,
            b_ref: s.b_ref,
            sigma_bone: s.sigma_bone,
            foot_indices: s.foot_indices,
            heel_indices: s.heel_indices,
        }
    }
}

impl Default for SkeletonSchema {
    fn default() -> Self {
        Self::from_json(DEFAULT_SCHEMA).expect("bundled skeleton schema is valid")
    }
}

impl SkeletonSchema {
    pub fn new(
        joint_names: Vec<String>,
        bones: Vec<(usize, usize)>,
        b_ref: Vec<f64>,
        sigma_bone: Vec<f64>,
        foot_indices: FootGroups,
        heel_indices: [usize; 2],
    ) -> Result<Self, SchemaError> {
        let m = joint_names.len();
        let l = bones.len();
        for (field, got) in [("b_ref", b_ref.len()), ("sigma_bone", sigma_bone.len())] {
            if got != l {
                return Err(SchemaError::Length { field, expected: l, got });
            }
        }
        if m > 0 && l != m - 1 {
            return Err(SchemaError::NotATree(format!("{m} joints need {} bones, got {l}", m - 1)));
        }
        for (i, &(a, b)) in bones.iter().enumerate() {
            if a >= m || b >= m {
                return Err(SchemaError::JointOutOfRange(i, m));
            }
            if !(b_ref[i] > 0.0 && sigma_bone[i] > 0.0) {
                return Err(SchemaError::NonPositive(i));
            }
        }
        for &j in foot_indices.left.iter().chain(&foot_indices.right).chain(&heel_indices) {
            if j >= m {
                return Err(SchemaError::JointOutOfRange(usize::MAX, m));
            }
        }
        // union-find: M - 1 edges without a cycle span all joints
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b) in &bones {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(SchemaError::NotATree(format!("bone ({a}, {b}) closes a cycle")));
            }
            parent[ra] = rb;
        }
        Ok(Self { joint_names, bones, b_ref, sigma_bone, foot_indices, heel_indices })
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn num_bones(&self) -> usize {
        self.bones.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn bones(&self) -> &[(usize, usize)] {
        &self.bones
    }

    pub fn b_ref(&self) -> &[f64] {
        &self.b_ref
    }

    pub fn sigma_bone(&self) -> &[f64] {
        &self.sigma_bone
    }

    pub fn foot_indices(&self) -> &FootGroups {
        &self.foot_indices
    }

    /// Left and right ground-contact joints.
    pub fn heel_indices(&self) -> [usize; 2] {
        self.heel_indices
    }

    pub fn with_b_ref(mut self, b_ref: Vec<f64>) -> Result<Self, SchemaError> {
        if b_ref.len() != self.bones.len() || b_ref.iter().any(|&b| !(b > 0.0)) {
            return Err(SchemaError::Length { field: "b_ref", expected: self.bones.len(), got: b_ref.len() });
        }
        self.b_ref = b_ref;
        Ok(self)
    }

    pub fn with_sigma_bone(mut self, sigma: Vec<f64>) -> Result<Self, SchemaError> {
        if sigma.len() != self.bones.len() || sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(SchemaError::Length { field: "sigma_bone", expected: self.bones.len(), got: sigma.len() });
        }
        self.sigma_bone = sigma;
        Ok(self)
    }

    /// Bones in breadth-first order from `root`, each oriented parent to
    /// child, paired with the bone index.
    pub fn traversal(&self, root: usize) -> Vec<(usize, usize, usize)> {
        let m = self.num_joints();
        let mut seen = vec![false; m];
        let mut out = Vec::with_capacity(self.bones.len());
        let mut queue = std::collections::VecDeque::from([root]);
        seen[root] = true;
        while let Some(j) = queue.pop_front() {
            for (bi, &(a, b)) in self.bones.iter().enumerate() {
                let child = if a == j {
                    b
                } else if b == j {
                    a
                } else {
                    continue;
                };
                if !seen[child] {
                    seen[child] = true;
                    out.push((bi, j, child));
                    queue.push_back(child);
                }
            }
        }
        out
    }
}
