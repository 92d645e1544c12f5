use super::SpectralBasis;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::supra::SupraGraph;

/// Per-(node, layer) raw feature vectors, laid out layer-major then node, the
/// same order the model stacks its tokens in.
#[derive(Clone, Debug, PartialEq)]
pub struct RawEncodingTable<T> {
    num_nodes: usize,
    num_layers: usize,
    width: usize,
    data: Vec<T>,
    isolated: Vec<bool>,
}

impl<T: Scalar> RawEncodingTable<T> {
    /// `rows` must hold `num_layers * num_nodes` vectors of `width` entries.
    pub fn from_rows(
        num_nodes: usize,
        num_layers: usize,
        width: usize,
        data: Vec<T>,
        isolated: Vec<bool>,
    ) -> Result<Self> {
        let slots = num_nodes * num_layers;
        if data.len() != slots * width || isolated.len() != slots {
            return Err(Error::Shape(format!(
                "encoding table for {num_layers}x{num_nodes} slots of width {width} got {} values and {} flags",
                data.len(),
                isolated.len()
            )));
        }
        Ok(Self {
            num_nodes,
            num_layers,
            width,
            data,
            isolated,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, u: usize, tau: usize) -> &[T] {
        let slot = tau * self.num_nodes + u;
        &self.data[slot * self.width..(slot + 1) * self.width]
    }

    pub fn is_isolated(&self, u: usize, tau: usize) -> bool {
        self.isolated[tau * self.num_nodes + u]
    }

    /// All vectors, row-major `(num_layers * num_nodes) x width`.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn cast<U: Scalar>(&self) -> RawEncodingTable<U> {
        RawEncodingTable {
            num_nodes: self.num_nodes,
            num_layers: self.num_layers,
            width: self.width,
            data: self.data.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
            isolated: self.isolated.clone(),
        }
    }
}

/// Builds `[phi_1 .. phi_k](u, tau) ++ [lambda_1 .. lambda_k]` for every node
/// and layer. Nodes without a supra-graph row get a zero projection half.
/// Virtual-node rows are dropped.
pub fn raw_encoding<T: Scalar>(
    basis: &SpectralBasis<T>,
    sg: &SupraGraph,
    num_nodes: usize,
) -> Result<RawEncodingTable<T>> {
    if basis.size() != sg.size() {
        return Err(Error::Shape(format!(
            "basis over {} rows does not belong to a supra-graph of {} rows",
            basis.size(),
            sg.size()
        )));
    }
    if sg.num_nodes() != num_nodes {
        return Err(Error::Shape(format!(
            "supra-graph built for {} nodes, table requested for {num_nodes}",
            sg.num_nodes()
        )));
    }
    let k = basis.k();
    let layers = sg.num_layers();
    let width = 2 * k;
    let mut data = vec![T::zero(); layers * num_nodes * width];
    let mut isolated = vec![false; layers * num_nodes];
    for tau in 0..layers {
        for u in 0..num_nodes {
            let slot = tau * num_nodes + u;
            let out = &mut data[slot * width..(slot + 1) * width];
            match sg.row_of(u, tau) {
                Some(row) => out[..k].copy_from_slice(basis.row(row)),
                None => isolated[slot] = true,
            }
            out[k..].copy_from_slice(basis.eigenvalues());
            if sg.masks()[tau].is_isolated(u) {
                isolated[slot] = true;
            }
        }
    }
    RawEncodingTable::from_rows(num_nodes, layers, width, data, isolated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DynamicGraph;
    use crate::spectral::{normalized_laplacian, smallest_eigenpairs, EigenOptions};
    use crate::supra::{build_supra, SupraConfig};

    fn toy() -> (DynamicGraph, SupraGraph) {
        let g = DynamicGraph::from_edge_lists(
            5,
            &[
                vec![(0, 1), (1, 2), (3, 4)],
                vec![(0, 1)],
                vec![(0, 1), (1, 2), (2, 3)],
            ],
        )
        .unwrap();
        let w = g.window_of(2, 3);
        let sg = build_supra(g.window_snapshots(&w), w, &SupraConfig::default()).unwrap();
        (g, sg)
    }

    #[test]
    fn isolated_slots_get_zero_projection() {
        let (_, sg) = toy();
        let l = normalized_laplacian::<f64>(&sg).unwrap();
        let basis = smallest_eigenpairs(&l, 3, &EigenOptions::default()).unwrap();
        let table = raw_encoding(&basis, &sg, 5).unwrap();
        assert_eq!(table.width(), 6);
        // node 3 isolated at tau = 1, active at tau = 0
        assert!(table.is_isolated(3, 1));
        assert_eq!(&table.get(3, 1)[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&table.get(3, 0)[..3], basis.row(sg.row_of(3, 0).unwrap()));
        assert_ne!(table.get(3, 0)[..3], table.get(3, 1)[..3]);
        // the eigenvalue half is global
        for tau in 0..3 {
            for u in 0..5 {
                assert_eq!(&table.get(u, tau)[3..], basis.eigenvalues());
            }
        }
        // all isolated entries share one vector
        assert_eq!(table.get(4, 1), table.get(2, 1));
    }

    #[test]
    fn mismatched_basis_rejected() {
        let (_, sg) = toy();
        let other = SupraGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let l = normalized_laplacian::<f64>(&other).unwrap();
        let basis = smallest_eigenpairs(&l, 2, &EigenOptions::default()).unwrap();
        assert!(raw_encoding(&basis, &sg, 5).is_err());
    }
}
