//! Feature-based pairwise scoring policy with an optional adaptation layer.
//!
//! Every node gets eight features from the current and best solutions:
//! coordinates, the lengths of its incoming and outgoing edges in both
//! solutions (divided by sqrt 2), its normalized position, and a constant.
//! A move is scored from a source node `x`, a destination node `y` and two
//! pair features `g`:
//!
//! ```text
//! raw = w_src . f_x + w_dst . f_y + (W_q f_x) . (W_k f_y) + w_pair . g
//! s   = raw / temperature
//! s'  = s + phi . [s, g, f_x, f_y]        (adaptation layer, if enabled)
//! ```
//!
//! followed by a softmax over the valid candidates. For 2-opt `(i, j)` the
//! source and destination are the nodes at positions `i` and `j`, and `g`
//! holds the length of the two edges the move adds and the segment length.
//! Pickup-and-delivery moves factorize into three softmax stages: pick a
//! request (pickup to delivery, removal gain), then a pickup slot, then a
//! delivery slot (insertion costs), each with its own head.

use std::f64::consts::SQRT_2;

use super::params::{
    EasParams, PolicyParams, EAS_FEATURES, EMBED_DIM, HEAD_LEN, NODE_FEATURES, PAIR_FEATURES, W_DST, W_K, W_PAIR,
    W_Q, W_SRC,
};
use super::{draw_index, ActionDistribution, ImprovementPolicy, Sampled};
use crate::error::{invalid, Error, Result};
use crate::instance::Geometry;
use crate::mdp::{delivery_slots, is_degenerate_two_opt, remove_request, Action, PdVariant, Problem, SearchState};
use crate::rng::SearchRng;

type Feat = [f64; NODE_FEATURES];
type Pair = [f64; PAIR_FEATURES];
type Embed = [f64; EMBED_DIM];

const REQUEST_HEAD: usize = 0;
const PICKUP_HEAD: usize = 1;
const DELIVERY_HEAD: usize = 2;

/// Attempts at rejection sampling distinct reinsertion moves before falling
/// back to the enumerated joint distribution.
const REJECTION_DRAWS_PER_MOVE: usize = 64;

/// Accumulator for gradients of log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    /// Same layout as [`PolicyParams::weights`].
    pub theta: Option<Vec<f64>>,
    /// Same layout as [`EasParams::phi`].
    pub phi: Option<Vec<f64>>,
}

impl GradBuffer {
    pub fn theta_only(params: &PolicyParams) -> Self {
        Self {
            theta: Some(vec![0.0; params.weights.len()]),
            phi: None,
        }
    }

    pub fn phi_only(eas: &EasParams) -> Self {
        Self {
            theta: None,
            phi: Some(vec![0.0; eas.phi.len()]),
        }
    }

    pub fn both(params: &PolicyParams, eas: &EasParams) -> Self {
        Self {
            theta: Some(vec![0.0; params.weights.len()]),
            phi: Some(vec![0.0; eas.phi.len()]),
        }
    }

    pub fn clear(&mut self) {
        for v in [&mut self.theta, &mut self.phi].into_iter().flatten() {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &GradBuffer, scale: f64) {
        fn axpy(dst: &mut Option<Vec<f64>>, src: &Option<Vec<f64>>, a: f64) {
            if let (Some(d), Some(s)) = (dst, src) {
                d.iter_mut().zip(s).for_each(|(d, s)| *d += a * s);
            }
        }
        axpy(&mut self.theta, &other.theta, scale);
        axpy(&mut self.phi, &other.phi, scale);
    }
}

/// The reference policy, optionally wrapped with adaptation weights.
#[derive(Debug, Clone)]
pub struct ReferencePolicy<'a> {
    params: &'a PolicyParams,
    eas: Option<EasParams>,
}

struct NodeFeatures {
    rows: Vec<Feat>,
}

impl NodeFeatures {
    fn new(geom: &Geometry, current: &[usize], best: &[usize]) -> Self {
        let n = current.len();
        let mut rows = vec![[0.0; NODE_FEATURES]; n];
        let coords = geom.coords();
        for (p, &v) in current.iter().enumerate() {
            let r = &mut rows[v];
            r[0] = coords[v].x;
            r[1] = coords[v].y;
            r[2] = geom.dist(current[(p + n - 1) % n], v) / SQRT_2;
            r[3] = geom.dist(v, current[(p + 1) % n]) / SQRT_2;
            r[6] = p as f64 / n as f64;
            r[7] = 1.0;
        }
        for (p, &v) in best.iter().enumerate() {
            rows[v][4] = geom.dist(best[(p + n - 1) % n], v) / SQRT_2;
            rows[v][5] = geom.dist(v, best[(p + 1) % n]) / SQRT_2;
        }
        Self { rows }
    }
}

/// Per-node projections of one head.
struct HeadCache {
    a: Vec<f64>,
    b: Vec<f64>,
    q: Vec<Embed>,
    k: Vec<Embed>,
}

impl HeadCache {
    fn new(head: &[f64], feats: &NodeFeatures) -> Self {
        let n = feats.rows.len();
        let mut c = HeadCache {
            a: vec![0.0; n],
            b: vec![0.0; n],
            q: vec![[0.0; EMBED_DIM]; n],
            k: vec![[0.0; EMBED_DIM]; n],
        };
        for (v, f) in feats.rows.iter().enumerate() {
            c.a[v] = dot(&head[W_SRC..W_SRC + NODE_FEATURES], f);
            c.b[v] = dot(&head[W_DST..W_DST + NODE_FEATURES], f);
            for d in 0..EMBED_DIM {
                let qo = W_Q + d * NODE_FEATURES;
                let ko = W_K + d * NODE_FEATURES;
                c.q[v][d] = dot(&head[qo..qo + NODE_FEATURES], f);
                c.k[v][d] = dot(&head[ko..ko + NODE_FEATURES], f);
            }
        }
        c
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One softmax over candidates `(src, dst, pair)`.
struct Stage {
    head: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    pair: Vec<Pair>,
    /// Scores before the adaptation layer.
    base: Vec<f64>,
    prob: Vec<f64>,
}

impl Stage {
    fn with_capacity(head: usize, cap: usize) -> Self {
        Stage {
            head,
            src: Vec::with_capacity(cap),
            dst: Vec::with_capacity(cap),
            pair: Vec::with_capacity(cap),
            base: Vec::new(),
            prob: Vec::new(),
        }
    }

    fn push(&mut self, src: usize, dst: usize, pair: Pair) {
        self.src.push(src);
        self.dst.push(dst);
        self.pair.push(pair);
    }

    fn len(&self) -> usize {
        self.src.len()
    }
}

enum Pick<'r> {
    Sample(&'r mut SearchRng),
    Given(Action),
}

impl<'a> ReferencePolicy<'a> {
    pub fn new(params: &'a PolicyParams) -> Self {
        Self { params, eas: None }
    }

    pub fn with_eas(params: &'a PolicyParams, eas: EasParams) -> Self {
        Self { params, eas: Some(eas) }
    }

    pub fn params(&self) -> &PolicyParams {
        self.params
    }

    pub fn eas(&self) -> Option<&EasParams> {
        self.eas.as_ref()
    }

    pub fn eas_mut(&mut self) -> Option<&mut EasParams> {
        self.eas.as_mut()
    }

    pub fn into_eas(self) -> Option<EasParams> {
        self.eas
    }

    fn active_eas(&self) -> Option<&EasParams> {
        self.eas.as_ref().filter(|e| e.enabled)
    }

    fn check_kind(&self, problem: &Problem) -> Result<()> {
        use super::PolicyKind;
        let ok = matches!(
            (self.params.kind, problem),
            (PolicyKind::Tsp, Problem::Tsp(_)) | (PolicyKind::Pdp, Problem::Pdp { .. })
        );
        if !ok {
            return Err(invalid(format!("{:?} policy cannot score this problem", self.params.kind)));
        }
        Ok(())
    }

    /// Scores and normalizes a stage in place.
    fn score(&self, stage: &mut Stage, feats: &NodeFeatures, cache: &HeadCache) -> Result<()> {
        let head = self.params.head(stage.head);
        let w_pair = &head[W_PAIR..W_PAIR + PAIR_FEATURES];
        let inv_t = 1.0 / self.params.temperature;
        let phi = self.active_eas().map(|e| e.head(stage.head));
        let m = stage.len();
        stage.base = Vec::with_capacity(m);
        let mut scores = Vec::with_capacity(m);
        let mut max = f64::NEG_INFINITY;
        for c in 0..m {
            let (x, y, g) = (stage.src[c], stage.dst[c], &stage.pair[c]);
            let raw = cache.a[x] + cache.b[y] + dot(&cache.q[x], &cache.k[y]) + dot(w_pair, g);
            let s = raw * inv_t;
            let adapted = match phi {
                Some(phi) => {
                    let extra = phi[0] * s
                        + dot(&phi[1..1 + PAIR_FEATURES], g)
                        + dot(&phi[1 + PAIR_FEATURES..1 + PAIR_FEATURES + NODE_FEATURES], &feats.rows[x])
                        + dot(&phi[1 + PAIR_FEATURES + NODE_FEATURES..], &feats.rows[y]);
                    s + extra
                }
                None => s,
            };
            if !adapted.is_finite() {
                return Err(Error::Numeric(format!("non-finite move score {adapted}")));
            }
            max = max.max(adapted);
            stage.base.push(s);
            scores.push(adapted);
        }
        let mut total = 0.0;
        for s in &mut scores {
            *s = (*s - max).exp();
            total += *s;
        }
        for s in &mut scores {
            *s /= total;
        }
        stage.prob = scores;
        Ok(())
    }

    /// Adds `scale * grad log p(chosen)` for one stage.
    fn accumulate(
        &self,
        stage: &Stage,
        chosen: usize,
        feats: &NodeFeatures,
        cache: &HeadCache,
        buf: &mut GradBuffer,
        scale: f64,
    ) {
        let n = feats.rows.len();
        let eas = self.active_eas();
        if let Some(theta) = buf.theta.as_mut() {
            let phi0 = eas.map_or(0.0, |e| e.head(stage.head)[0]);
            let factor = scale * (1.0 + phi0) / self.params.temperature;
            let mut m_src = vec![0.0; n];
            let mut m_dst = vec![0.0; n];
            let mut a_src = vec![[0.0; EMBED_DIM]; n];
            let mut b_dst = vec![[0.0; EMBED_DIM]; n];
            let mut e_pair = [0.0; PAIR_FEATURES];
            for c in 0..stage.len() {
                let p = stage.prob[c];
                if p == 0.0 {
                    continue;
                }
                let (x, y) = (stage.src[c], stage.dst[c]);
                m_src[x] += p;
                m_dst[y] += p;
                for d in 0..EMBED_DIM {
                    a_src[x][d] += p * cache.k[y][d];
                    b_dst[y][d] += p * cache.q[x][d];
                }
                for (e, g) in e_pair.iter_mut().zip(&stage.pair[c]) {
                    *e += p * g;
                }
            }
            let t = &mut theta[stage.head * HEAD_LEN..(stage.head + 1) * HEAD_LEN];
            let (xa, ya) = (stage.src[chosen], stage.dst[chosen]);
            let (fx, fy) = (&feats.rows[xa], &feats.rows[ya]);
            for f in 0..NODE_FEATURES {
                let mut e_src = 0.0;
                let mut e_dst = 0.0;
                for v in 0..n {
                    e_src += m_src[v] * feats.rows[v][f];
                    e_dst += m_dst[v] * feats.rows[v][f];
                }
                t[W_SRC + f] += factor * (fx[f] - e_src);
                t[W_DST + f] += factor * (fy[f] - e_dst);
                for d in 0..EMBED_DIM {
                    let mut e_q = 0.0;
                    let mut e_k = 0.0;
                    for v in 0..n {
                        e_q += a_src[v][d] * feats.rows[v][f];
                        e_k += b_dst[v][d] * feats.rows[v][f];
                    }
                    t[W_Q + d * NODE_FEATURES + f] += factor * (cache.k[ya][d] * fx[f] - e_q);
                    t[W_K + d * NODE_FEATURES + f] += factor * (cache.q[xa][d] * fy[f] - e_k);
                }
            }
            for g in 0..PAIR_FEATURES {
                t[W_PAIR + g] += factor * (stage.pair[chosen][g] - e_pair[g]);
            }
        }
        if let (Some(phi_grad), Some(_)) = (buf.phi.as_mut(), eas) {
            let mut ez = [0.0; EAS_FEATURES];
            let z = |c: usize, out: &mut [f64; EAS_FEATURES], w: f64| {
                out[0] += w * stage.base[c];
                for g in 0..PAIR_FEATURES {
                    out[1 + g] += w * stage.pair[c][g];
                }
                let (fx, fy) = (&feats.rows[stage.src[c]], &feats.rows[stage.dst[c]]);
                for f in 0..NODE_FEATURES {
                    out[1 + PAIR_FEATURES + f] += w * fx[f];
                    out[1 + PAIR_FEATURES + NODE_FEATURES + f] += w * fy[f];
                }
            };
            for c in 0..stage.len() {
                if stage.prob[c] != 0.0 {
                    z(c, &mut ez, stage.prob[c]);
                }
            }
            let mut za = [0.0; EAS_FEATURES];
            z(chosen, &mut za, 1.0);
            let out = &mut phi_grad[stage.head * EAS_FEATURES..(stage.head + 1) * EAS_FEATURES];
            for i in 0..EAS_FEATURES {
                out[i] += scale * (za[i] - ez[i]);
            }
        }
    }

    fn tsp_stage(&self, geom: &Geometry, state: &SearchState) -> Result<(Stage, NodeFeatures, HeadCache)> {
        let t = &state.current;
        let n = t.len();
        let feats = NodeFeatures::new(geom, t, &state.best);
        let cache = HeadCache::new(self.params.head(0), &feats);
        let mut stage = Stage::with_capacity(0, n * n / 2);
        for i in 0..n {
            let before = t[(i + n - 1) % n];
            for j in i + 1..n {
                if is_degenerate_two_opt(n, i, j) {
                    continue;
                }
                let after = t[(j + 1) % n];
                let added = (geom.dist(before, t[j]) + geom.dist(t[i], after)) / SQRT_2;
                stage.push(t[i], t[j], [added, (j - i) as f64 / n as f64]);
            }
        }
        if stage.len() == 0 {
            return Err(invalid("the state has no valid moves"));
        }
        self.score(&mut stage, &feats, &cache)?;
        Ok((stage, feats, cache))
    }

    /// Maps a stage candidate back to `(i, j)` positions.
    fn tsp_pair(state: &SearchState, stage: &Stage, c: usize) -> (usize, usize) {
        // Position lookup is linear but only runs once per chosen move.
        let pos = |v: usize| state.current.iter().position(|&x| x == v).unwrap();
        (pos(stage.src[c]), pos(stage.dst[c]))
    }

    fn tsp_index(state: &SearchState, stage: &Stage, i: usize, j: usize) -> Option<usize> {
        let t = &state.current;
        if i >= j || j >= t.len() || is_degenerate_two_opt(t.len(), i, j) {
            return None;
        }
        (0..stage.len()).find(|&c| stage.src[c] == t[i] && stage.dst[c] == t[j])
    }

    fn walk(
        &self,
        problem: &Problem,
        state: &SearchState,
        mut pick: Pick<'_>,
        mut grad: Option<(&mut GradBuffer, f64)>,
    ) -> Result<Sampled> {
        self.check_kind(problem)?;
        match problem {
            Problem::Tsp(inst) => {
                let (stage, feats, cache) = self.tsp_stage(inst.geometry(), state)?;
                let c = match &mut pick {
                    Pick::Sample(rng) => draw_index(&stage.prob, &[], rng),
                    Pick::Given(Action::TwoOpt { i, j }) => Self::tsp_index(state, &stage, *i, *j)
                        .ok_or_else(|| invalid(format!("2-opt ({i}, {j}) is not in the support")))?,
                    Pick::Given(a) => return Err(invalid(format!("{a:?} is not a 2-opt move"))),
                };
                if let Some((buf, scale)) = grad.as_mut() {
                    self.accumulate(&stage, c, &feats, &cache, buf, *scale);
                }
                let (i, j) = Self::tsp_pair(state, &stage, c);
                Ok(Sampled {
                    action: Action::TwoOpt { i, j },
                    log_prob: stage.prob[c].ln(),
                })
            }
            Problem::Pdp { instance, variant } => {
                let given = match pick {
                    Pick::Given(Action::Reinsert { request, j, k }) => Some((request, j, k)),
                    Pick::Given(a) => return Err(invalid(format!("{a:?} is not a reinsertion move"))),
                    Pick::Sample(_) => None,
                };
                let geom = instance.geometry();
                let n = instance.requests();
                let feats = NodeFeatures::new(geom, &state.current, &state.best);
                let caches: Vec<HeadCache> = (0..3).map(|h| HeadCache::new(self.params.head(h), &feats)).collect();
                let mut log_prob = 0.0;
                let mut choose = |stage: &Stage, want: Option<usize>, pick: &mut Pick<'_>| -> Result<usize> {
                    let c = match (want, pick) {
                        (Some(c), _) => c,
                        (None, Pick::Sample(rng)) => draw_index(&stage.prob, &[], rng),
                        (None, Pick::Given(_)) => unreachable!(),
                    };
                    if stage.prob[c] == 0.0 && want.is_some() {
                        return Err(invalid("move has zero probability"));
                    }
                    log_prob += stage.prob[c].ln();
                    Ok(c)
                };
                let mut pick = pick;

                let mut s1 = self.request_stage(geom, n, &state.current);
                self.score(&mut s1, &feats, &caches[REQUEST_HEAD])?;
                if let Some((r, _, _)) = given {
                    if r >= n {
                        return Err(invalid(format!("request {r} out of range")));
                    }
                }
                let r = choose(&s1, given.map(|g| g.0), &mut pick)?;
                if let Some((buf, scale)) = grad.as_mut() {
                    self.accumulate(&s1, r, &feats, &caches[REQUEST_HEAD], buf, *scale);
                }

                let reduced = remove_request(&state.current, r);
                let mut s2 = self.pickup_stage(geom, instance.pickup_node(r), &reduced);
                self.score(&mut s2, &feats, &caches[PICKUP_HEAD])?;
                if let Some((_, j, _)) = given {
                    if j >= reduced.len() {
                        return Err(invalid(format!("pickup slot {j} out of range")));
                    }
                }
                let j = choose(&s2, given.map(|g| g.1), &mut pick)?;
                if let Some((buf, scale)) = grad.as_mut() {
                    self.accumulate(&s2, j, &feats, &caches[PICKUP_HEAD], buf, *scale);
                }

                let slots = delivery_slots(&reduced, j, *variant, n);
                let mut s3 = self.delivery_stage(geom, instance.pickup_node(r), instance.delivery_node(r), &reduced, j, &slots);
                self.score(&mut s3, &feats, &caches[DELIVERY_HEAD])?;
                let want_k = match given {
                    Some((_, _, k)) => Some(
                        slots
                            .iter()
                            .position(|&s| s == k)
                            .ok_or_else(|| infeasible_slot(*variant, j, k))?,
                    ),
                    None => None,
                };
                let kc = choose(&s3, want_k, &mut pick)?;
                if let Some((buf, scale)) = grad.as_mut() {
                    self.accumulate(&s3, kc, &feats, &caches[DELIVERY_HEAD], buf, *scale);
                }
                Ok(Sampled {
                    action: Action::Reinsert {
                        request: r,
                        j,
                        k: slots[kc],
                    },
                    log_prob,
                })
            }
        }
    }

    fn request_stage(&self, geom: &Geometry, n: usize, seq: &[usize]) -> Stage {
        let len = seq.len();
        let mut pos = vec![0; len];
        for (p, &v) in seq.iter().enumerate() {
            pos[v] = p;
        }
        let at = |p: usize| seq[p % len];
        let mut stage = Stage::with_capacity(REQUEST_HEAD, n);
        for r in 0..n {
            let (pn, dn) = (r + 1, r + 1 + n);
            let (pp, dp) = (pos[pn], pos[dn]);
            let gain = if dp == pp + 1 {
                let (a, b) = (at(pp + len - 1), at(dp + 1));
                geom.dist(a, pn) + geom.dist(pn, dn) + geom.dist(dn, b) - geom.dist(a, b)
            } else {
                let (a, b) = (at(pp + len - 1), at(pp + 1));
                let (c, e) = (at(dp + len - 1), at(dp + 1));
                geom.dist(a, pn) + geom.dist(pn, b) - geom.dist(a, b) + geom.dist(c, dn) + geom.dist(dn, e)
                    - geom.dist(c, e)
            };
            stage.push(pn, dn, [gain / SQRT_2, (dp - pp) as f64 / len as f64]);
        }
        stage
    }

    fn pickup_stage(&self, geom: &Geometry, pickup: usize, reduced: &[usize]) -> Stage {
        let len = reduced.len();
        let mut stage = Stage::with_capacity(PICKUP_HEAD, len);
        for j in 0..len {
            let (a, b) = (reduced[j], reduced[(j + 1) % len]);
            let cost = geom.dist(a, pickup) + geom.dist(pickup, b) - geom.dist(a, b);
            stage.push(pickup, a, [cost / SQRT_2, j as f64 / len as f64]);
        }
        stage
    }

    fn delivery_stage(
        &self,
        geom: &Geometry,
        pickup: usize,
        delivery: usize,
        reduced: &[usize],
        j: usize,
        slots: &[usize],
    ) -> Stage {
        let len = reduced.len();
        // The sequence with the pickup placed after reduced[j].
        let with_p = |idx: usize| -> usize {
            let idx = idx % (len + 1);
            match idx.cmp(&(j + 1)) {
                std::cmp::Ordering::Less => reduced[idx],
                std::cmp::Ordering::Equal => pickup,
                std::cmp::Ordering::Greater => reduced[idx - 1],
            }
        };
        let mut stage = Stage::with_capacity(DELIVERY_HEAD, slots.len());
        for &k in slots {
            let (a, b) = (with_p(k + 1), with_p(k + 2));
            let cost = geom.dist(a, delivery) + geom.dist(delivery, b) - geom.dist(a, b);
            stage.push(delivery, a, [cost / SQRT_2, (k - j) as f64 / len as f64]);
        }
        stage
    }

    /// `scale * grad log p(action)` added into `buf`; returns the log-probability.
    pub fn log_prob_grad(
        &self,
        problem: &Problem,
        state: &SearchState,
        action: Action,
        buf: &mut GradBuffer,
        scale: f64,
    ) -> Result<f64> {
        self.walk(problem, state, Pick::Given(action), Some((buf, scale)))
            .map(|s| s.log_prob)
    }

    /// Samples a move and adds `scale * grad log p(move)` into `buf`.
    pub fn sample_with_grad(
        &self,
        problem: &Problem,
        state: &SearchState,
        rng: &mut SearchRng,
        buf: &mut GradBuffer,
        scale: f64,
    ) -> Result<Sampled> {
        self.walk(problem, state, Pick::Sample(rng), Some((buf, scale)))
    }

    fn pdp_joint(&self, problem: &Problem, state: &SearchState) -> Result<ActionDistribution> {
        let Problem::Pdp { instance, variant } = problem else {
            unreachable!()
        };
        let geom = instance.geometry();
        let n = instance.requests();
        let feats = NodeFeatures::new(geom, &state.current, &state.best);
        let caches: Vec<HeadCache> = (0..3).map(|h| HeadCache::new(self.params.head(h), &feats)).collect();
        let mut s1 = self.request_stage(geom, n, &state.current);
        self.score(&mut s1, &feats, &caches[REQUEST_HEAD])?;
        let mut support = Vec::new();
        let mut probabilities = Vec::new();
        for r in 0..n {
            let reduced = remove_request(&state.current, r);
            let mut s2 = self.pickup_stage(geom, instance.pickup_node(r), &reduced);
            self.score(&mut s2, &feats, &caches[PICKUP_HEAD])?;
            for j in 0..reduced.len() {
                let slots = delivery_slots(&reduced, j, *variant, n);
                let mut s3 =
                    self.delivery_stage(geom, instance.pickup_node(r), instance.delivery_node(r), &reduced, j, &slots);
                self.score(&mut s3, &feats, &caches[DELIVERY_HEAD])?;
                for (kc, &k) in slots.iter().enumerate() {
                    support.push(Action::Reinsert { request: r, j, k });
                    probabilities.push(s1.prob[r] * s2.prob[j] * s3.prob[kc]);
                }
            }
        }
        Ok(ActionDistribution { support, probabilities })
    }
}

fn infeasible_slot(variant: PdVariant, j: usize, k: usize) -> Error {
    if k < j {
        Error::InvalidArgument(format!("delivery slot {k} precedes pickup slot {j}"))
    } else {
        Error::InvalidArgument(format!("delivery slot {k} is not {variant:?}-feasible after pickup slot {j}"))
    }
}

impl ImprovementPolicy for ReferencePolicy<'_> {
    fn action_dist(&self, problem: &Problem, state: &SearchState) -> Result<ActionDistribution> {
        self.check_kind(problem)?;
        match problem {
            Problem::Tsp(inst) => {
                let (stage, _, _) = self.tsp_stage(inst.geometry(), state)?;
                let support = (0..stage.len())
                    .map(|c| {
                        let (i, j) = Self::tsp_pair(state, &stage, c);
                        Action::TwoOpt { i, j }
                    })
                    .collect();
                Ok(ActionDistribution {
                    support,
                    probabilities: stage.prob,
                })
            }
            Problem::Pdp { .. } => self.pdp_joint(problem, state),
        }
    }

    fn sample(&self, problem: &Problem, state: &SearchState, rng: &mut SearchRng) -> Result<Sampled> {
        self.walk(problem, state, Pick::Sample(rng), None)
    }

    fn sample_distinct(
        &self,
        problem: &Problem,
        state: &SearchState,
        count: usize,
        rng: &mut SearchRng,
    ) -> Result<Vec<Sampled>> {
        self.check_kind(problem)?;
        match problem {
            Problem::Tsp(inst) => {
                let (stage, _, _) = self.tsp_stage(inst.geometry(), state)?;
                if count > stage.len() {
                    return Err(invalid(format!(
                        "cannot draw {count} distinct moves from a support of {}",
                        stage.len()
                    )));
                }
                let mut taken = vec![false; stage.len()];
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    let c = draw_index(&stage.prob, &taken, rng);
                    taken[c] = true;
                    let (i, j) = Self::tsp_pair(state, &stage, c);
                    out.push(Sampled {
                        action: Action::TwoOpt { i, j },
                        log_prob: stage.prob[c].ln(),
                    });
                }
                Ok(out)
            }
            Problem::Pdp { .. } => {
                // Drawing until a new move appears samples exactly from the
                // renormalized remainder.
                let mut out: Vec<Sampled> = Vec::with_capacity(count);
                let mut draws = 0;
                while out.len() < count && draws < REJECTION_DRAWS_PER_MOVE * (count + 1) {
                    draws += 1;
                    let s = self.walk(problem, state, Pick::Sample(rng), None)?;
                    if !out.iter().any(|o| o.action == s.action) {
                        out.push(s);
                    }
                }
                if out.len() < count {
                    let dist = self.pdp_joint(problem, state)?;
                    if count > dist.len() {
                        return Err(invalid(format!(
                            "cannot draw {count} distinct moves from a support of {}",
                            dist.len()
                        )));
                    }
                    let mut taken: Vec<bool> = dist.support.iter().map(|a| out.iter().any(|o| o.action == *a)).collect();
                    while out.len() < count {
                        let c = draw_index(&dist.probabilities, &taken, rng);
                        taken[c] = true;
                        out.push(Sampled {
                            action: dist.support[c],
                            log_prob: dist.probabilities[c].ln(),
                        });
                    }
                }
                Ok(out)
            }
        }
    }

    fn log_prob(&self, problem: &Problem, state: &SearchState, action: Action) -> Result<f64> {
        self.walk(problem, state, Pick::Given(action), None).map(|s| s.log_prob)
    }
}
