//! Flat nodal vector fields (node-major, xyz-minor).
//!
//! Every per-node 3-vector quantity in the crate — geometry, control fields,
//! shape and control sensitivities — shares this layout: entry `3 * node + c`
//! holds Cartesian component `c` of `node`.

use nalgebra::Vector3;

use crate::{Error, Result};

/// A length-`3n` flat vector of per-node 3-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    data: Vec<f64>,
}

impl NodalField {
    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            data: vec![0.0; 3 * n_nodes],
        }
    }

    /// Every node set to the same 3-vector.
    pub fn constant(n_nodes: usize, v: Vector3<f64>) -> Self {
        let mut f = Self::zeros(n_nodes);
        for i in 0..n_nodes {
            f.set_node(i, v);
        }
        f
    }

    pub fn from_flat(data: Vec<f64>) -> Result<Self> {
        if data.len() % 3 != 0 {
            return Err(Error::DimensionMismatch {
                expected: 3 * (data.len() / 3 + 1),
                got: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("nodal field"));
        }
        Ok(Self { data })
    }

    pub fn n_nodes(&self) -> usize {
        self.data.len() / 3
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn node(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.data[3 * i], self.data[3 * i + 1], self.data[3 * i + 2])
    }

    pub fn set_node(&mut self, i: usize, v: Vector3<f64>) {
        self.data[3 * i] = v.x;
        self.data[3 * i + 1] = v.y;
        self.data[3 * i + 2] = v.z;
    }

    pub fn add_node(&mut self, i: usize, v: Vector3<f64>) {
        self.data[3 * i] += v.x;
        self.data[3 * i + 1] += v.y;
        self.data[3 * i + 2] += v.z;
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, other: &NodalField, factor: f64) {
        assert_eq!(self.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += factor * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.data.iter_mut() {
            *a *= factor;
        }
    }

    pub fn dot(&self, other: &NodalField) -> f64 {
        assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest per-node Euclidean norm.
    pub fn max_node_norm(&self) -> f64 {
        (0..self.n_nodes()).fold(0.0, |m, i| m.max(self.node(i).norm()))
    }

    /// Restriction to a node subset: output node `k` is input node `map[k]`.
    pub fn gather(&self, map: &[usize]) -> NodalField {
        let mut out = NodalField::zeros(map.len());
        for (k, &i) in map.iter().enumerate() {
            out.set_node(k, self.node(i));
        }
        out
    }

    /// Adds local node `k` of `self` into node `map[k]` of `target`.
    pub fn scatter_add_into(&self, map: &[usize], target: &mut NodalField) {
        for (k, &i) in map.iter().enumerate() {
            target.add_node(i, self.node(k));
        }
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    pub fn set_component(&mut self, c: usize, values: &[f64]) {
        assert_eq!(values.len(), self.n_nodes());
        for (i, v) in values.iter().enumerate() {
            self.data[3 * i + c] = *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_node_major() {
        let mut f = NodalField::zeros(2);
        f.set_node(1, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(f.as_slice(), &[0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(f.component(1), vec![0.0, 2.0]);
    }

    #[test]
    fn from_flat_rejects_bad_length() {
        assert!(NodalField::from_flat(vec![1.0, 2.0]).is_err());
        assert!(NodalField::from_flat(vec![1.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn gather_scatter_roundtrip() {
        let f = NodalField::from_flat((0..9).map(f64::from).collect()).unwrap();
        let sub = f.gather(&[2, 0]);
        assert_eq!(sub.node(0), f.node(2));
        let mut back = NodalField::zeros(3);
        sub.scatter_add_into(&[2, 0], &mut back);
        assert_eq!(back.node(2), f.node(2));
        assert_eq!(back.node(1), Vector3::zeros());
    }
}
