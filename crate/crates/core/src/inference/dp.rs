//! Allele-ladder dynamic program for the marginal likelihood.
//!
//! Positions of a marker (every allele an unknown may carry, every known
//! allele, and the back-stutter position below each) are visited in
//! descending designation within each ladder class. The peak at `x` depends
//! on allele counts at `x` and `x + 1` only, so the DP state per unknown
//! individual is the pair (alleles assigned so far, count at the previous
//! position), six states per individual.
//!
//! The coancestry prior factorizes over positions: the probability of any
//! draw order with allele totals `N_x` is
//!
//! ```text
//! prod_x prod_{j < N_x} (j * theta + (1 - theta) * p_x) / prod_{m < 2P} (1 + (m - 1) * theta)
//! ```
//!
//! and each individual's genotype covers `2 / prod_x n_x!` draw orders. The
//! numerator is a per-position factor of the summed count, so no running
//! count vector is needed in the state.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::allele::Allele;
use crate::error::{Error, Result};
use crate::freqdb::FrequencyTable;
use crate::peakmodel::{ln_gamma_pdf, ln_lower_regularized_gamma, ModelParameters};
use crate::profiles::Epg;

use super::{JointHypothesis, MAX_UNKNOWN_PERSONS};

const PAIR_STATES: usize = 6;
/// (assigned so far, count at previous position) for each pair code.
const PAIR_R: [u8; PAIR_STATES] = [0, 1, 1, 2, 2, 2];
const PAIR_C: [u8; PAIR_STATES] = [0, 0, 1, 0, 1, 2];
const INV_FACT: [f64; 3] = [1.0, 1.0, 0.5];

fn pair_code(r: u8, c: u8) -> usize {
    match (r, c) {
        (0, 0) => 0,
        (1, 0) => 1,
        (1, 1) => 2,
        (2, 0) => 3,
        (2, 1) => 4,
        (2, 2) => 5,
        _ => unreachable!("invalid pair state ({r}, {c})"),
    }
}

/// A group of samples linked by shared unknown individuals.
#[derive(Debug, Clone)]
pub(crate) struct ComponentLayout {
    /// Indices into the caller's EPG list.
    pub epgs: Vec<usize>,
    /// For each member EPG, the local person index of each unknown slot.
    pub slot_person: Vec<Vec<usize>>,
    pub n_persons: usize,
    pub population: Arc<FrequencyTable>,
    pub theta: f64,
}

/// Matches EPGs to hypotheses and splits them into independent components.
pub(crate) fn layout(epgs: &[Epg], joint: &JointHypothesis) -> Result<Vec<ComponentLayout>> {
    joint.validate()?;
    let mut labels = BTreeSet::new();
    for e in epgs {
        if !labels.insert(e.sample_label()) {
            return Err(Error::InvalidHypothesis(format!(
                "sample `{}` given twice",
                e.sample_label()
            )));
        }
        if joint.hypothesis(e.sample_label()).is_none() {
            return Err(Error::InvalidHypothesis(format!(
                "`{}` has no hypothesis for sample `{}`",
                joint.label,
                e.sample_label()
            )));
        }
    }
    if let Some(s) = joint.per_epg().keys().find(|s| !labels.contains(s.as_str())) {
        return Err(Error::InvalidHypothesis(format!(
            "`{}` refers to sample `{s}` which was not supplied",
            joint.label
        )));
    }

    let persons = joint.person_map();
    // Union-find over EPG indices through shared persons.
    let mut parent: Vec<usize> = (0..epgs.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, e) in epgs.iter().enumerate() {
        for &p in &persons[e.sample_label()] {
            if let Some(&j) = owner.get(&p) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            } else {
                owner.insert(p, i);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..epgs.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }

    let mut out = Vec::new();
    for members in groups.into_values() {
        let first = joint.hypothesis(epgs[members[0]].sample_label()).unwrap();
        let mut local: BTreeMap<usize, usize> = BTreeMap::new();
        let mut slot_person = Vec::new();
        for &i in &members {
            let label = epgs[i].sample_label();
            let h = joint.hypothesis(label).unwrap();
            if h.theta != first.theta
                || !(Arc::ptr_eq(&h.population, &first.population)
                    || *h.population == *first.population)
            {
                return Err(Error::InvalidHypothesis(format!(
                    "samples sharing unknown contributors must use one population and theta \
                     (`{}` vs `{}`)",
                    epgs[members[0]].sample_label(),
                    label
                )));
            }
            let slots = persons[label]
                .iter()
                .map(|p| {
                    let n = local.len();
                    *local.entry(*p).or_insert(n)
                })
                .collect();
            slot_person.push(slots);
        }
        if local.len() > MAX_UNKNOWN_PERSONS {
            return Err(Error::InvalidHypothesis(format!(
                "{} distinct unknown individuals in one analysis, at most {MAX_UNKNOWN_PERSONS} supported",
                local.len()
            )));
        }
        out.push(ComponentLayout {
            epgs: members,
            slot_person,
            n_persons: local.len(),
            population: first.population.clone(),
            theta: first.theta,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct EpgAtPosition {
    /// Index among the component's EPGs.
    local: usize,
    height: Option<f64>,
    known_here: Vec<f64>,
    known_up: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Position {
    prev_is_upper: bool,
    keep_count: bool,
    /// `prod_{j < N} (j * theta + (1 - theta) * p)` for `N = 0..=2P`; `None`
    /// if no unknown may carry this allele.
    prior: Option<Vec<f64>>,
    epgs: Vec<EpgAtPosition>,
}

#[derive(Debug, Clone)]
struct MarkerModel {
    positions: Vec<Position>,
    ln_const: f64,
}

#[derive(Debug, Clone)]
struct Component {
    epgs: Vec<usize>,
    slot_person: Vec<Vec<usize>>,
    n_known: Vec<usize>,
    n_persons: usize,
    markers: Vec<MarkerModel>,
    pow6: Vec<usize>,
    decode: Vec<u8>,
}

/// Likelihood structure for a fixed set of EPGs and hypothesis, reusable
/// across parameter values.
#[derive(Debug, Clone)]
pub(crate) struct CompiledModel {
    samples: Vec<String>,
    n_known: Vec<usize>,
    n_unknown: Vec<usize>,
    components: Vec<Component>,
    threshold: f64,
}

impl CompiledModel {
    pub fn new(epgs: &[Epg], joint: &JointHypothesis, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "threshold {threshold} must be positive"
            )));
        }
        let layouts = layout(epgs, joint)?;
        let components = layouts
            .iter()
            .map(|l| compile_component(epgs, joint, l, threshold))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledModel {
            samples: epgs.iter().map(|e| e.sample_label().to_string()).collect(),
            n_known: epgs
                .iter()
                .map(|e| joint.hypothesis(e.sample_label()).unwrap().known.len())
                .collect(),
            n_unknown: epgs
                .iter()
                .map(|e| joint.hypothesis(e.sample_label()).unwrap().n_unknowns)
                .collect(),
            components,
            threshold,
        })
    }

    pub fn contributors(&self, epg: usize) -> usize {
        self.n_known[epg] + self.n_unknown[epg]
    }

    /// Parameters in EPG order, validated against contributor counts.
    pub fn order_params(
        &self,
        params: &BTreeMap<String, ModelParameters>,
    ) -> Result<Vec<ModelParameters>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let p = params.get(s).ok_or_else(|| {
                    Error::InvalidParameters(format!("no parameters for sample `{s}`"))
                })?;
                p.validate()?;
                if p.phi.len() != self.contributors(i) {
                    return Err(Error::InvalidParameters(format!(
                        "sample `{s}`: phi has {} entries for {} contributors",
                        p.phi.len(),
                        self.contributors(i)
                    )));
                }
                Ok(p.clone())
            })
            .collect()
    }

    /// Natural-log likelihood; `-inf` when the data are impossible.
    pub fn ln_likelihood(&self, params: &[ModelParameters]) -> f64 {
        let mut total = 0.0;
        let mut scratch = Scratch::default();
        for comp in &self.components {
            for m in &comp.markers {
                total += comp.ln_marker(m, params, self.threshold, &mut scratch);
                if total == f64::NEG_INFINITY {
                    return total;
                }
            }
        }
        total
    }
}

fn compile_component(
    epgs: &[Epg],
    joint: &JointHypothesis,
    layout: &ComponentLayout,
    threshold: f64,
) -> Result<Component> {
    let members: Vec<&Epg> = layout.epgs.iter().map(|&i| &epgs[i]).collect();
    let hyps: Vec<_> = members
        .iter()
        .map(|e| joint.hypothesis(e.sample_label()).unwrap())
        .collect();
    let markers: BTreeSet<&str> = members.iter().flat_map(|e| e.markers()).collect();
    let p = layout.n_persons;
    let theta = layout.theta;

    let mut marker_models = Vec::with_capacity(markers.len());
    for marker in markers {
        let mut observed = BTreeSet::new();
        for e in &members {
            observed.extend(e.observed(marker, threshold));
        }
        let dist = layout
            .population
            .marker_distribution(marker, observed.iter().copied())?;

        // Known genotypes per member EPG typing this marker.
        let mut known_gt: Vec<Option<Vec<(Allele, Allele)>>> = Vec::new();
        for (e, h) in members.iter().zip(&hyps) {
            if e.marker(marker).is_none() {
                known_gt.push(None);
                continue;
            }
            let gts = h
                .known
                .iter()
                .map(|k| {
                    k.at(marker).ok_or_else(|| {
                        Error::InvalidHypothesis(format!(
                            "known contributor `{}` has no genotype at marker `{marker}`",
                            k.person_label()
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            known_gt.push(Some(gts));
        }

        let mut alleles: BTreeSet<Allele> = dist.alleles().iter().copied().collect();
        for gts in known_gt.iter().flatten() {
            for &(a, b) in gts {
                alleles.insert(a);
                alleles.insert(b);
            }
        }
        let mut positions: Vec<Allele> = alleles
            .iter()
            .flat_map(|&a| std::iter::once(a).chain(a.one_down()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        positions.sort_by_key(|a| (a.ladder_class(), std::cmp::Reverse(a.hundredths())));

        let count = |gt: &(Allele, Allele), x: Allele| (gt.0 == x) as u8 as f64 + (gt.1 == x) as u8 as f64;
        let mut pos_models = Vec::with_capacity(positions.len());
        for (i, &x) in positions.iter().enumerate() {
            let prev_is_upper = i > 0 && positions[i - 1] == x.one_up();
            let keep_count = positions.get(i + 1).is_some_and(|&n| n.one_up() == x);
            let prior = dist.get(x).map(|freq| {
                let mut v = Vec::with_capacity(2 * p + 1);
                let mut acc = 1.0;
                v.push(acc);
                for j in 0..2 * p {
                    acc *= j as f64 * theta + (1.0 - theta) * freq;
                    v.push(acc);
                }
                v
            });
            let mut at = Vec::new();
            for (local, (e, gts)) in members.iter().zip(&known_gt).enumerate() {
                let (Some(peaks), Some(gts)) = (e.marker(marker), gts) else {
                    continue;
                };
                let height = peaks.get(&x).copied().filter(|&h| h >= threshold);
                at.push(EpgAtPosition {
                    local,
                    height,
                    known_here: gts.iter().map(|g| count(g, x)).collect(),
                    known_up: gts.iter().map(|g| count(g, x.one_up())).collect(),
                });
            }
            pos_models.push(Position {
                prev_is_upper,
                keep_count,
                prior,
                epgs: at,
            });
        }
        let mut ln_const = p as f64 * std::f64::consts::LN_2;
        for m in 0..2 * p {
            ln_const -= (1.0 + (m as f64 - 1.0) * theta).ln();
        }
        marker_models.push(MarkerModel {
            positions: pos_models,
            ln_const,
        });
    }

    let n_states = PAIR_STATES.pow(p as u32);
    let pow6: Vec<usize> = (0..p).map(|k| PAIR_STATES.pow(k as u32)).collect();
    let mut decode = vec![0u8; n_states * p];
    for s in 0..n_states {
        for k in 0..p {
            decode[s * p + k] = ((s / pow6[k]) % PAIR_STATES) as u8;
        }
    }
    Ok(Component {
        epgs: layout.epgs.clone(),
        slot_person: layout.slot_person.clone(),
        n_known: hyps.iter().map(|h| h.known.len()).collect(),
        n_persons: p,
        markers: marker_models,
        pow6,
        decode,
    })
}

#[derive(Default)]
struct Scratch {
    cur: Vec<f64>,
    next: Vec<f64>,
    tables: Vec<Vec<f64>>,
}

const POW9: [usize; MAX_UNKNOWN_PERSONS + 1] = [1, 9, 81, 729, 6561, 59049];

impl Component {
    fn ln_marker(
        &self,
        marker: &MarkerModel,
        params: &[ModelParameters],
        threshold: f64,
        scratch: &mut Scratch,
    ) -> f64 {
        let p = self.n_persons;
        let n_states = PAIR_STATES.pow(p as u32);
        scratch.cur.clear();
        scratch.cur.resize(n_states, 0.0);
        scratch.next.clear();
        scratch.next.resize(n_states, 0.0);
        if scratch.tables.len() < self.epgs.len() {
            scratch.tables.resize(self.epgs.len(), Vec::new());
        }
        scratch.cur[0] = 1.0;
        let mut ln_scale = 0.0;

        let mut r = [0u8; MAX_UNKNOWN_PERSONS];
        let mut c_eff = [0u8; MAX_UNKNOWN_PERSONS];
        let mut lim = [0u8; MAX_UNKNOWN_PERSONS];
        let mut n = [0u8; MAX_UNKNOWN_PERSONS];

        for pos in &marker.positions {
            for at in &pos.epgs {
                let global = self.epgs[at.local];
                let max = fill_emission_table(
                    at,
                    &self.slot_person[at.local],
                    &params[global],
                    self.n_known[at.local],
                    pos.prior.is_some(),
                    pos.prev_is_upper,
                    threshold,
                    &mut scratch.tables[at.local],
                );
                if max == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                ln_scale += max;
            }
            let ones = [1.0];
            let prior: &[f64] = pos.prior.as_deref().unwrap_or(&ones);
            let carriable = pos.prior.is_some();

            scratch.next.fill(0.0);
            for s in 0..n_states {
                let w = scratch.cur[s];
                if w == 0.0 {
                    continue;
                }
                let codes = &self.decode[s * p..(s + 1) * p];
                for k in 0..p {
                    let code = codes[k] as usize;
                    r[k] = PAIR_R[code];
                    c_eff[k] = if pos.prev_is_upper { PAIR_C[code] } else { 0 };
                    lim[k] = if carriable { 2 - r[k] } else { 0 };
                    n[k] = 0;
                }
                'choices: loop {
                    let mut total = 0usize;
                    let mut wt = w;
                    let mut ns = 0usize;
                    for k in 0..p {
                        total += n[k] as usize;
                        wt *= INV_FACT[n[k] as usize];
                        let kept = if pos.keep_count { n[k] } else { 0 };
                        ns += pair_code(r[k] + n[k], kept) * self.pow6[k];
                    }
                    wt *= prior[total];
                    for at in &pos.epgs {
                        let persons = &self.slot_person[at.local];
                        let mut idx = 0usize;
                        for (j, &person) in persons.iter().enumerate() {
                            idx += (n[person] as usize * 3 + c_eff[person] as usize) * POW9[j];
                        }
                        wt *= scratch.tables[at.local][idx];
                    }
                    scratch.next[ns] += wt;

                    let mut k = 0;
                    loop {
                        if k == p {
                            break 'choices;
                        }
                        if n[k] < lim[k] {
                            n[k] += 1;
                            break;
                        }
                        n[k] = 0;
                        k += 1;
                    }
                }
            }
            let max = scratch.next.iter().copied().fold(0.0, f64::max);
            if max == 0.0 || !max.is_finite() {
                return f64::NEG_INFINITY;
            }
            for v in scratch.next.iter_mut() {
                *v /= max;
            }
            ln_scale += max.ln();
            std::mem::swap(&mut scratch.cur, &mut scratch.next);
        }
        let done: usize = (0..p).map(|k| pair_code(2, 0) * self.pow6[k]).sum();
        let mass = scratch.cur[done];
        if mass <= 0.0 {
            return f64::NEG_INFINITY;
        }
        mass.ln() + ln_scale + marker.ln_const
    }
}

/// Scaled emission factors for every (count here, count one repeat up)
/// combination of the EPG's unknown slots; returns the log of the scale.
#[allow(clippy::too_many_arguments)]
fn fill_emission_table(
    at: &EpgAtPosition,
    persons: &[usize],
    params: &ModelParameters,
    n_known: usize,
    carriable: bool,
    prev_is_upper: bool,
    threshold: f64,
    table: &mut Vec<f64>,
) -> f64 {
    let slots = persons.len();
    let size = POW9[slots];
    table.clear();
    table.resize(size, f64::NEG_INFINITY);

    let xi = params.xi;
    let s2 = params.sigma * params.sigma;
    let scale = params.mu * s2;
    let phi_known = &params.phi[..n_known];
    let phi_unknown = &params.phi[n_known..];
    let k_here: f64 = phi_known.iter().zip(&at.known_here).map(|(f, n)| f * n).sum();
    let k_up: f64 = phi_known.iter().zip(&at.known_up).map(|(f, n)| f * n).sum();
    let n_max = if carriable { 2u8 } else { 0 };
    let c_max = if prev_is_upper { 2u8 } else { 0 };
    let threshold_x = threshold / scale;

    let mut here = [0u8; MAX_UNKNOWN_PERSONS];
    let mut up = [0u8; MAX_UNKNOWN_PERSONS];
    let mut max = f64::NEG_INFINITY;
    loop {
        let mut own = k_here;
        let mut parent = k_up;
        let mut idx = 0;
        for j in 0..slots {
            own += phi_unknown[j] * here[j] as f64;
            parent += phi_unknown[j] * up[j] as f64;
            idx += (here[j] as usize * 3 + up[j] as usize) * POW9[j];
        }
        let dose = (1.0 - xi) * own + xi * parent;
        let v = match at.height {
            Some(h) => {
                if dose > 0.0 {
                    ln_gamma_pdf(h, dose / s2, scale)
                } else {
                    f64::NEG_INFINITY
                }
            }
            None => {
                if dose > 0.0 {
                    ln_lower_regularized_gamma(dose / s2, threshold_x)
                } else {
                    0.0
                }
            }
        };
        table[idx] = v;
        if v > max {
            max = v;
        }

        // Next combination with here + up <= 2 per slot.
        let mut j = 0;
        loop {
            if j == slots {
                if max.is_finite() {
                    for t in table.iter_mut() {
                        *t = (*t - max).exp();
                    }
                }
                return max;
            }
            if up[j] < c_max && here[j] + up[j] < 2 {
                up[j] += 1;
                break;
            }
            up[j] = 0;
            if here[j] < n_max {
                here[j] += 1;
                break;
            }
            here[j] = 0;
            j += 1;
        }
    }
}
