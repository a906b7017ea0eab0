//! Single-agent MDPs and the 1-D Gaussian grid abstraction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cltl::{JointLetter, Letter, Propositions};
use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;
/// Slack used when mapping a coordinate to its grid cell.
const CELL_EPS: f64 = 1e-9;

/// A finite MDP shared by all agents. Kernel rows are stored densely,
/// `kernel[(x * n_actions + a) * n_states + x']`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleAgentMdp {
    props: Propositions,
    n_states: usize,
    n_actions: usize,
    kernel: Vec<f64>,
    labels: Vec<Letter>,
    initial_states: Vec<usize>,
    representatives: Option<Vec<f64>>,
    action_values: Option<Vec<f64>>,
    sink: Option<usize>,
}

impl SingleAgentMdp {
    pub fn new(
        props: Propositions,
        n_states: usize,
        n_actions: usize,
        kernel: Vec<f64>,
        labels: Vec<Letter>,
    ) -> Result<Self> {
        let mdp = Self {
            props,
            n_states,
            n_actions,
            kernel,
            labels,
            initial_states: Vec::new(),
            representatives: None,
            action_values: None,
            sink: None,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn with_initial_states(mut self, states: Vec<usize>) -> Result<Self> {
        self.initial_states = states;
        self.validate()?;
        Ok(self)
    }

    pub fn with_sink(mut self, sink: usize) -> Result<Self> {
        self.sink = Some(sink);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        if self.n_states == 0 || self.n_actions == 0 {
            return bad("state and action counts must be positive".into());
        }
        if self.kernel.len() != self.n_states * self.n_actions * self.n_states {
            return bad(format!(
                "kernel has {} entries, expected {}",
                self.kernel.len(),
                self.n_states * self.n_actions * self.n_states
            ));
        }
        if self.labels.len() != self.n_states {
            return bad(format!("{} labels for {} states", self.labels.len(), self.n_states));
        }
        let all = if self.props.len() == 32 { u32::MAX } else { (1u32 << self.props.len()) - 1 };
        if let Some(x) = self.labels.iter().position(|&l| l & !all != 0) {
            return bad(format!("label of state {x} uses an undeclared proposition"));
        }
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.row(x, a);
                if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                    return bad(format!("negative or non-finite entry in row ({x}, {a})"));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > ROW_TOL {
                    return bad(format!("row ({x}, {a}) sums to {s}"));
                }
            }
        }
        if let Some(&x) = self.initial_states.iter().find(|&&x| x >= self.n_states) {
            return bad(format!("initial state {x} out of range"));
        }
        if let Some(r) = &self.representatives {
            if r.len() != self.n_states {
                return bad("representative count differs from state count".into());
            }
        }
        if let Some(v) = &self.action_values {
            if v.len() != self.n_actions {
                return bad("action value count differs from action count".into());
            }
        }
        if let Some(s) = self.sink {
            if s >= self.n_states {
                return bad(format!("sink {s} out of range"));
            }
        }
        Ok(())
    }

    pub fn props(&self) -> &Propositions {
        &self.props
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn row(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.n_actions + a) * self.n_states;
        &self.kernel[start..start + self.n_states]
    }

    pub fn label(&self, x: usize) -> Letter {
        self.labels[x]
    }

    pub fn labels(&self) -> &[Letter] {
        &self.labels
    }

    pub fn initial_states(&self) -> &[usize] {
        &self.initial_states
    }

    pub fn representatives(&self) -> Option<&[f64]> {
        self.representatives.as_deref()
    }

    pub fn action_values(&self) -> Option<&[f64]> {
        self.action_values.as_deref()
    }

    pub fn sink(&self) -> Option<usize> {
        self.sink
    }

    /// Grid cell containing `coord`, for abstraction-built models. Cells are
    /// half-open `[lo, hi)`; coordinates outside the domain map to the sink.
    pub fn state_of(&self, coord: f64) -> Result<usize> {
        let reps = self
            .representatives
            .as_ref()
            .ok_or_else(|| Error::InvalidInitialState("model has no state coordinates".into()))?;
        let cells: Vec<usize> = (0..self.n_states).filter(|&x| Some(x) != self.sink).collect();
        if cells.len() < 2 {
            return Err(Error::InvalidInitialState("grid too small".into()));
        }
        let width = reps[cells[1]] - reps[cells[0]];
        let lo = reps[cells[0]] - width / 2.0;
        let k = ((coord - lo) / width + CELL_EPS).floor();
        if k < 0.0 || k as usize >= cells.len() {
            return self.sink.ok_or_else(|| Error::InvalidInitialState(format!("coordinate {coord} outside the grid")));
        }
        Ok(cells[k as usize])
    }

    pub fn to_document(&self) -> MdpDocument {
        MdpDocument {
            propositions: self.props.names().to_vec(),
            n_states: self.n_states,
            n_actions: self.n_actions,
            kernel: self.kernel.clone(),
            labels: self
                .labels
                .iter()
                .map(|&l| self.props.letter_names(l).into_iter().map(str::to_string).collect())
                .collect(),
            initial_states: self.initial_states.clone(),
            representatives: self.representatives.clone(),
            action_values: self.action_values.clone(),
            sink: self.sink,
        }
    }

    pub fn from_document(doc: MdpDocument) -> Result<Self> {
        let props = Propositions::new(doc.propositions)?;
        let labels = doc
            .labels
            .iter()
            .map(|names| props.letter(names.iter().map(String::as_str)))
            .collect::<Result<Vec<_>>>()?;
        let mdp = Self {
            props,
            n_states: doc.n_states,
            n_actions: doc.n_actions,
            kernel: doc.kernel,
            labels,
            initial_states: doc.initial_states,
            representatives: doc.representatives,
            action_values: doc.action_values,
            sink: doc.sink,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let doc: MdpDocument = serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        Self::from_document(doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_document()).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// On-disk form of a [`SingleAgentMdp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub propositions: Vec<String>,
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major: `[(x * n_actions + a) * n_states + x']`.
    pub kernel: Vec<f64>,
    pub labels: Vec<Vec<String>>,
    #[serde(default)]
    pub initial_states: Vec<usize>,
    #[serde(default)]
    pub representatives: Option<Vec<f64>>,
    #[serde(default)]
    pub action_values: Option<Vec<f64>>,
    #[serde(default)]
    pub sink: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelInterval {
    pub prop: String,
    pub lo: f64,
    pub hi: f64,
}

/// Parameters of the grid abstraction of `x+ = x + u + w`, `w ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAbstraction {
    #[serde(default = "defaults::x_lo")]
    pub x_lo: f64,
    #[serde(default = "defaults::x_hi")]
    pub x_hi: f64,
    #[serde(default = "defaults::n_states")]
    pub n_states: usize,
    #[serde(default = "defaults::u_lo")]
    pub u_lo: f64,
    #[serde(default = "defaults::u_hi")]
    pub u_hi: f64,
    #[serde(default = "defaults::n_actions")]
    pub n_actions: usize,
    #[serde(default = "defaults::noise_std")]
    pub noise_std: f64,
    #[serde(default)]
    pub labels: Vec<LabelInterval>,
}

mod defaults {
    pub fn x_lo() -> f64 {
        -10.0
    }
    pub fn x_hi() -> f64 {
        10.0
    }
    pub fn n_states() -> usize {
        100
    }
    pub fn u_lo() -> f64 {
        -2.0
    }
    pub fn u_hi() -> f64 {
        2.0
    }
    pub fn n_actions() -> usize {
        21
    }
    pub fn noise_std() -> f64 {
        1.0
    }
}

impl Default for GridAbstraction {
    fn default() -> Self {
        Self {
            x_lo: defaults::x_lo(),
            x_hi: defaults::x_hi(),
            n_states: defaults::n_states(),
            u_lo: defaults::u_lo(),
            u_hi: defaults::u_hi(),
            n_actions: defaults::n_actions(),
            noise_std: defaults::noise_std(),
            labels: Vec::new(),
        }
    }
}

impl GridAbstraction {
    pub fn with_labels(labels: &[(&str, f64, f64)]) -> Self {
        Self {
            labels: labels
                .iter()
                .map(|&(p, lo, hi)| LabelInterval { prop: p.to_string(), lo, hi })
                .collect(),
            ..Self::default()
        }
    }

    pub fn build(&self, props: &Propositions) -> Result<SingleAgentMdp> {
        abstract_1d_gaussian(self, props)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Grid abstraction with `n_states` uniform cells plus an absorbing,
/// unlabeled sink (the last state) collecting mass that leaves the domain.
pub fn abstract_1d_gaussian(p: &GridAbstraction, props: &Propositions) -> Result<SingleAgentMdp> {
    let bad = |m: String| Err(Error::InvalidModel(m));
    if p.x_lo.is_nan() || p.x_hi.is_nan() || p.x_lo >= p.x_hi || p.n_states < 2 {
        return bad("need x_lo < x_hi and at least 2 cells".into());
    }
    if p.n_actions < 1 || p.u_lo > p.u_hi {
        return bad("need at least 1 action and u_lo <= u_hi".into());
    }
    if p.noise_std.is_nan() || p.noise_std <= 0.0 {
        return bad("noise_std must be positive".into());
    }
    let n = p.n_states;
    let width = (p.x_hi - p.x_lo) / n as f64;
    let edges: Vec<f64> = (0..=n).map(|k| p.x_lo + k as f64 * width).collect();
    let centers: Vec<f64> = (0..n).map(|k| p.x_lo + (k as f64 + 0.5) * width).collect();
    let actions: Vec<f64> = if p.n_actions == 1 {
        vec![(p.u_lo + p.u_hi) / 2.0]
    } else {
        (0..p.n_actions)
            .map(|k| p.u_lo + k as f64 * (p.u_hi - p.u_lo) / (p.n_actions - 1) as f64)
            .collect()
    };

    let mut labels = vec![0 as Letter; n + 1];
    for li in &p.labels {
        let prop = props
            .index_of(&li.prop)
            .ok_or_else(|| Error::InvalidModel(format!("label interval uses undeclared proposition `{}`", li.prop)))?;
        if li.lo.is_nan() || li.hi.is_nan() || li.lo >= li.hi {
            return bad(format!("empty label interval for `{}`", li.prop));
        }
        for (k, &c) in centers.iter().enumerate() {
            if li.lo <= c && c < li.hi {
                labels[k] |= 1 << prop;
            }
        }
    }

    let ns = n + 1;
    let mut kernel = vec![0.0; ns * p.n_actions * ns];
    let mut cdf = vec![0.0; n + 1];
    for (x, &c) in centers.iter().enumerate() {
        for (a, &u) in actions.iter().enumerate() {
            let mean = c + u;
            for (k, &e) in edges.iter().enumerate() {
                cdf[k] = normal_cdf((e - mean) / p.noise_std);
            }
            let row = &mut kernel[(x * p.n_actions + a) * ns..][..ns];
            let mut inside = 0.0;
            for k in 0..n {
                let m = (cdf[k + 1] - cdf[k]).max(0.0);
                row[k] = m;
                inside += m;
            }
            row[n] = (1.0 - inside).max(0.0);
            // Absorb the rounding residue so the row sums to 1.
            let s: f64 = row.iter().sum();
            row[n] += 1.0 - s;
        }
    }
    for a in 0..p.n_actions {
        kernel[(n * p.n_actions + a) * ns + n] = 1.0;
    }

    // The sink's coordinate is nominal: half a cell past the upper edge.
    let mut reps = centers;
    reps.push(p.x_hi + width / 2.0);
    let mdp = SingleAgentMdp {
        props: props.clone(),
        n_states: ns,
        n_actions: p.n_actions,
        kernel,
        labels,
        initial_states: Vec::new(),
        representatives: Some(reps),
        action_values: Some(actions),
        sink: Some(n),
    };
    mdp.validate()?;
    Ok(mdp)
}

/// `L(x) = (L_c(x^1), ..., L_c(x^N))`.
pub fn joint_label(x: &[usize], mdp: &SingleAgentMdp) -> JointLetter {
    x.iter().map(|&s| mdp.label(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn props2() -> Propositions {
        Propositions::new(["p1", "p2"]).unwrap()
    }

    fn mu1_grid() -> SingleAgentMdp {
        GridAbstraction::with_labels(&[("p1", 2.0, 4.0), ("p2", -4.0, -2.0)])
            .build(&props2())
            .unwrap()
    }

    #[test]
    fn rows_are_stochastic_and_sink_absorbs() {
        let m = mu1_grid();
        assert_eq!(m.n_states(), 101);
        assert_eq!(m.n_actions(), 21);
        for x in 0..m.n_states() {
            for a in 0..m.n_actions() {
                let s: f64 = m.row(x, a).iter().sum();
                assert!((s - 1.0).abs() <= 1e-12);
            }
        }
        let sink = m.sink().unwrap();
        for a in 0..m.n_actions() {
            assert_eq!(m.row(sink, a)[sink], 1.0);
        }
        assert_eq!(m.label(sink), 0);
    }

    #[test]
    fn self_transition_of_center_cell() {
        // 101 cells of width 0.2 put a center at 0.
        let p = GridAbstraction { x_lo: -10.1, x_hi: 10.1, n_states: 101, ..GridAbstraction::default() };
        let m = p.build(&props2()).unwrap();
        let x = m.state_of(0.0).unwrap();
        assert!(m.representatives().unwrap()[x].abs() < 1e-12);
        let a = m.action_values().unwrap().iter().position(|u| u.abs() < 1e-12).unwrap();
        let expect = normal_cdf(0.1) - normal_cdf(-0.1);
        assert!((m.row(x, a)[x] - expect).abs() < 1e-12);
        assert!((expect - 0.0797).abs() < 1e-4);
    }

    #[test]
    fn normal_cdf_reference_values() {
        // Reference values to 15 digits.
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.0) - 0.841344746068543).abs() < 1e-14);
        assert!((normal_cdf(-1.96) - 0.024997895148220).abs() < 1e-14);
        assert!((normal_cdf(0.1) - 0.539827837277029).abs() < 1e-14);
    }

    #[test]
    fn ten_cells_carry_p1() {
        let m = mu1_grid();
        let p1 = m.labels().iter().filter(|&&l| l & 1 != 0).count();
        let p2 = m.labels().iter().filter(|&&l| l & 2 != 0).count();
        assert_eq!((p1, p2), (10, 10));
        let reps = m.representatives().unwrap();
        for (x, &l) in m.labels().iter().enumerate() {
            if l & 1 != 0 {
                assert!((2.0..4.0).contains(&reps[x]));
            }
        }
    }

    #[test]
    fn coordinates_map_to_cells() {
        let m = mu1_grid();
        let reps = m.representatives().unwrap();
        for (c, center) in [(-2.1, -2.1), (-1.9, -1.9), (0.1, 0.1), (2.4, 2.5), (0.0, 0.1), (-10.0, -9.9), (9.99, 9.9)] {
            let x = m.state_of(c).unwrap();
            assert!((reps[x] - center).abs() < 1e-9, "{c} -> {}", reps[x]);
        }
        assert_eq!(m.state_of(10.0).unwrap(), m.sink().unwrap());
        assert_eq!(m.state_of(-10.5).unwrap(), m.sink().unwrap());
        let x0: Vec<usize> = [-2.1, -1.9, 0.1, 2.4].iter().map(|&c| m.state_of(c).unwrap()).collect();
        assert_eq!(joint_label(&x0, &m), vec![2, 0, 0, 1]);
    }

    #[test]
    fn abstraction_is_deterministic() {
        assert_eq!(mu1_grid().kernel(), mu1_grid().kernel());
    }

    #[test]
    fn document_round_trip() {
        let m = mu1_grid().with_initial_states(vec![3, 4]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = SingleAgentMdp::load(&path).unwrap();
        assert_eq!(back.kernel(), m.kernel());
        assert_eq!(back.labels(), m.labels());
        assert_eq!(back.initial_states(), &[3, 4]);
        assert_eq!(back.sink(), m.sink());
    }

    #[test]
    fn invalid_models_are_rejected() {
        let props = Propositions::new(["p"]).unwrap();
        assert!(matches!(
            SingleAgentMdp::new(props.clone(), 2, 1, vec![0.5, 0.4, 0.0, 1.0], vec![0, 1]),
            Err(Error::InvalidModel(_))
        ));
        assert!(SingleAgentMdp::new(props.clone(), 2, 1, vec![0.5, 0.5, 0.0, 1.0], vec![0, 1]).is_ok());
        assert!(SingleAgentMdp::new(props.clone(), 2, 1, vec![0.5, 0.5, 0.0, 1.0], vec![0, 2]).is_err());
        let p = GridAbstraction { noise_std: 0.0, ..GridAbstraction::default() };
        assert!(p.build(&props).is_err());
        let p = GridAbstraction::with_labels(&[("q", 0.0, 1.0)]);
        assert!(p.build(&props).is_err());
    }

    #[test]
    fn joint_labels_match_interval_membership() {
        use rand::{Rng, SeedableRng};
        let m = mu1_grid();
        let reps = m.representatives().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let atoms = [
            crate::cltl::CountingProp::new(0, crate::cltl::Threshold::Const(2)),
            crate::cltl::CountingProp::new(1, crate::cltl::Threshold::Const(1)),
        ];
        for _ in 0..1000 {
            let x: Vec<usize> = (0..4).map(|_| rng.random_range(0..100)).collect();
            let letter = joint_label(&x, &m);
            let in_p1 = x.iter().filter(|&&s| (2.0..4.0).contains(&reps[s])).count();
            let in_p2 = x.iter().filter(|&&s| (-4.0..-2.0).contains(&reps[s])).count();
            assert_eq!(crate::cltl::eval_counting_prop(&letter, &atoms[0]), in_p1 >= 2);
            assert_eq!(crate::cltl::eval_counting_prop(&letter, &atoms[1]), in_p2 >= 1);
        }
    }
}
