//! The parallel iteration run across `L` simulated nodes that each own a
//! contiguous block of rows of `P`, `D` and `Y`.
//!
//! One iteration exchanges, in order:
//!
//! 1. [`Message::IterationBroadcast`]: the current `(Q, S)` to every node;
//! 2. one [`NodeShare`] per node with the partial sums behind `bQ`, `bS`
//!    and the stop test;
//! 3. [`Message::BestResponseBroadcast`]: the reduced `(bQ, bS)`;
//! 4. one [`CoefficientShare`] per node, four scalars `(a_l, b_l, c_l, d_l)`;
//! 5. [`Message::StepDecision`]: the step, taken by every node;
//! 6. one [`Message::ObjectiveShare`] per node, used only for the trace.
//!
//! Shares are always reduced in node order, so results do not depend on
//! arrival order and a single node reproduces the monolithic solver bit for
//! bit.

use std::ops::Range;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::best_response::{bp_rows, bs_from_argument, s_argument, BestResponse};
use crate::error::{check_shape, Error, Result};
use crate::line_search::{block_coefficients, exact_step, LineSearchPoly};
use crate::linalg::{add_diag, fro2, l1, l1_change, Cholesky};
use crate::model::{delta_inner, lerp, FactorState, ProblemData};
use crate::pbr::{IterationTrace, SolveOutcome, SolverConfig, StepRule, StopReason};
use crate::scalar::Scalar;

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "LRSD_THREADS";

/// Balanced contiguous row blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    ranges: Vec<Range<usize>>,
}

impl Partition {
    pub fn num_nodes(&self) -> usize {
        self.ranges.len()
    }

    pub fn num_rows(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn range(&self, l: usize) -> Result<Range<usize>> {
        self.ranges.get(l).cloned().ok_or_else(|| {
            Error::InvalidArgument(format!("node {l} out of range for L={}", self.ranges.len()))
        })
    }
}

/// Splits `0..n` into `l` ranges whose sizes differ by at most one, the
/// larger ones first.
pub fn partition_rows(n: usize, l: usize) -> Result<Partition> {
    if l < 1 || l > n {
        return Err(Error::InvalidArgument(format!(
            "node count L={l} must lie in [1, N={n}]"
        )));
    }
    let (base, extra) = (n / l, n % l);
    let mut ranges = Vec::with_capacity(l);
    let mut start = 0;
    for i in 0..l {
        let len = base + usize::from(i < extra);
        ranges.push(start..start + len);
        start += len;
    }
    Ok(Partition { ranges })
}

/// First-round contribution of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeShare<T> {
    pub iter: u64,
    pub node: u64,
    /// `P_l^T P_l`
    pub gram: Array2<T>,
    /// `P_l^T (Y_l - D_l S)`
    pub rhs_q: Array2<T>,
    /// `P_l^T R_l`
    pub pt_r: Array2<T>,
    /// `D_l^T R_l`
    pub s_arg: Array2<T>,
    /// Column sums of `D_l * D_l`.
    pub ddiag: Array1<T>,
    /// `<bP_l - P_l, R_l Q^T + lambda P_l>`
    pub p_dir: T,
}

/// Second-round contribution of one node: its part of the quartic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientShare<T> {
    pub iter: u64,
    pub node: u64,
    pub coefficients: LineSearchPoly<T>,
}

impl<T> CoefficientShare<T> {
    /// Scalars carried on the wire.
    pub const SCALARS: usize = 4;
}

/// Everything that crosses a node boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum Message<T> {
    IterationBroadcast {
        iter: u64,
        q: Array2<T>,
        s: Array2<T>,
    },
    NodeShare(NodeShare<T>),
    BestResponseBroadcast {
        iter: u64,
        bq: Array2<T>,
        bs: Array2<T>,
    },
    CoefficientShare(CoefficientShare<T>),
    StepDecision {
        iter: u64,
        gamma: T,
    },
    ObjectiveShare {
        iter: u64,
        node: u64,
        resid2: T,
        p2: T,
    },
}

const TAG_BROADCAST: u8 = 1;
const TAG_NODE: u8 = 2;
const TAG_BEST: u8 = 3;
const TAG_COEF: u8 = 4;
const TAG_STEP: u8 = 5;
const TAG_OBJ: u8 = 6;

fn mat_len<T>(m: &Array2<T>) -> usize {
    16 + 8 * m.len()
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn real<T: Scalar>(&mut self, v: T) {
        self.0.extend_from_slice(&v.as_f64().to_le_bytes());
    }

    fn mat<T: Scalar>(&mut self, m: &Array2<T>) {
        self.u64(m.nrows() as u64);
        self.u64(m.ncols() as u64);
        for &v in m.iter() {
            self.real(v);
        }
    }

    fn vec<T: Scalar>(&mut self, v: &Array1<T>) {
        self.u64(v.len() as u64);
        for &x in v.iter() {
            self.real(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Protocol(format!("message truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn real<T: Scalar>(&mut self) -> Result<T> {
        Ok(T::lit(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"))))
    }

    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Protocol(format!("length {v} too large")))
    }

    fn mat<T: Scalar>(&mut self) -> Result<Array2<T>> {
        let (r, c) = (self.len()?, self.len()?);
        let n = r
            .checked_mul(c)
            .filter(|&n| n.saturating_mul(8) <= self.buf.len() - self.pos)
            .ok_or_else(|| Error::Protocol(format!("message truncated at byte {}", self.pos)))?;
        let vals = (0..n).map(|_| self.real()).collect::<Result<Vec<T>>>()?;
        Ok(Array2::from_shape_vec((r, c), vals).expect("length matches shape"))
    }

    fn vec<T: Scalar>(&mut self) -> Result<Array1<T>> {
        let n = self.len()?;
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(Error::Protocol(format!("message truncated at byte {}", self.pos)));
        }
        let vals = (0..n).map(|_| self.real()).collect::<Result<Vec<T>>>()?;
        Ok(Array1::from(vals))
    }
}

impl<T: Scalar> Message<T> {
    /// Size of [`Message::encode`]'s output, without encoding.
    pub fn encoded_len(&self) -> usize {
        1 + match self {
            Message::IterationBroadcast { q, s, .. } => 8 + mat_len(q) + mat_len(s),
            Message::NodeShare(sh) => {
                16 + mat_len(&sh.gram)
                    + mat_len(&sh.rhs_q)
                    + mat_len(&sh.pt_r)
                    + mat_len(&sh.s_arg)
                    + 8
                    + 8 * sh.ddiag.len()
                    + 8
            }
            Message::BestResponseBroadcast { bq, bs, .. } => 8 + mat_len(bq) + mat_len(bs),
            Message::CoefficientShare(_) => 16 + 8 * CoefficientShare::<T>::SCALARS,
            Message::StepDecision { .. } => 16,
            Message::ObjectiveShare { .. } => 32,
        }
    }

    /// Little-endian binary form: a tag byte, then the fields in declaration
    /// order. Integers are `u64`, reals `f64`, matrices `rows, cols` followed
    /// by the entries in row-major order, vectors a length and the entries.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::with_capacity(self.encoded_len()));
        match self {
            Message::IterationBroadcast { iter, q, s } => {
                w.0.push(TAG_BROADCAST);
                w.u64(*iter);
                w.mat(q);
                w.mat(s);
            }
            Message::NodeShare(sh) => {
                w.0.push(TAG_NODE);
                w.u64(sh.iter);
                w.u64(sh.node);
                w.mat(&sh.gram);
                w.mat(&sh.rhs_q);
                w.mat(&sh.pt_r);
                w.mat(&sh.s_arg);
                w.vec(&sh.ddiag);
                w.real(sh.p_dir);
            }
            Message::BestResponseBroadcast { iter, bq, bs } => {
                w.0.push(TAG_BEST);
                w.u64(*iter);
                w.mat(bq);
                w.mat(bs);
            }
            Message::CoefficientShare(c) => {
                w.0.push(TAG_COEF);
                w.u64(c.iter);
                w.u64(c.node);
                let p = c.coefficients;
                for v in [p.a, p.b, p.c, p.d] {
                    w.real(v);
                }
            }
            Message::StepDecision { iter, gamma } => {
                w.0.push(TAG_STEP);
                w.u64(*iter);
                w.real(*gamma);
            }
            Message::ObjectiveShare {
                iter,
                node,
                resid2,
                p2,
            } => {
                w.0.push(TAG_OBJ);
                w.u64(*iter);
                w.u64(*node);
                w.real(*resid2);
                w.real(*p2);
            }
        }
        w.0
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        let tag = r.take(1)?[0];
        let msg = match tag {
            TAG_BROADCAST => Message::IterationBroadcast {
                iter: r.u64()?,
                q: r.mat()?,
                s: r.mat()?,
            },
            TAG_NODE => Message::NodeShare(NodeShare {
                iter: r.u64()?,
                node: r.u64()?,
                gram: r.mat()?,
                rhs_q: r.mat()?,
                pt_r: r.mat()?,
                s_arg: r.mat()?,
                ddiag: r.vec()?,
                p_dir: r.real()?,
            }),
            TAG_BEST => Message::BestResponseBroadcast {
                iter: r.u64()?,
                bq: r.mat()?,
                bs: r.mat()?,
            },
            TAG_COEF => {
                let (iter, node) = (r.u64()?, r.u64()?);
                let (a, b, c, d) = (r.real()?, r.real()?, r.real()?, r.real()?);
                Message::CoefficientShare(CoefficientShare {
                    iter,
                    node,
                    coefficients: LineSearchPoly::new(a, b, c, d),
                })
            }
            TAG_STEP => Message::StepDecision {
                iter: r.u64()?,
                gamma: r.real()?,
            },
            TAG_OBJ => Message::ObjectiveShare {
                iter: r.u64()?,
                node: r.u64()?,
                resid2: r.real()?,
                p2: r.real()?,
            },
            other => return Err(Error::Protocol(format!("unknown message tag {other}"))),
        };
        if r.pos != buf.len() {
            return Err(Error::Protocol(format!(
                "{} trailing bytes after message",
                buf.len() - r.pos
            )));
        }
        Ok(msg)
    }
}

/// State owned by one node: its rows of `P`, `D`, `Y`, and what it caches
/// at the current iterate.
struct Node<T> {
    id: usize,
    p: Array2<T>,
    d: Array2<T>,
    y: Array2<T>,
    ddiag: Array1<T>,
    ds: Array2<T>,
    r: Array2<T>,
    bp: Array2<T>,
}

impl<T: Scalar> Node<T> {
    fn new(data: &ProblemData<T>, z: &FactorState<T>, id: usize, rows: Range<usize>) -> Self {
        let take = |m: ArrayView2<T>| m.slice(ndarray::s![rows.clone(), ..]).to_owned();
        let d = take(data.d());
        let ddiag = d.map_axis(Axis(0), |col| col.iter().fold(T::zero(), |a, &x| a + x * x));
        let p = take(z.p.view());
        let bp = Array2::zeros(p.dim());
        Self {
            id,
            y: take(data.y()),
            ds: Array2::zeros((0, 0)),
            r: Array2::zeros((0, 0)),
            p,
            d,
            ddiag,
            bp,
        }
    }

    /// Recomputes the residual block at `(P_l, q, s)`; returns the squared
    /// norms of `R_l` and `P_l`.
    fn refresh(&mut self, q: &Array2<T>, s: &Array2<T>) -> (T, T) {
        self.ds = self.d.dot(s);
        let mut r = self.p.dot(q);
        ndarray::Zip::from(&mut r)
            .and(&self.ds)
            .and(&self.y)
            .for_each(|r, &ds, &y| *r = *r + ds - y);
        self.r = r;
        (fro2(&self.r.view()), fro2(&self.p.view()))
    }

    fn share(&mut self, iter: u64, q: &Array2<T>, lambda: T) -> Result<NodeShare<T>> {
        let y_minus_ds = &self.y - &self.ds;
        self.bp = bp_rows(&y_minus_ds.view(), &q.view(), lambda)?;
        let mut gp = self.r.dot(&q.t());
        gp.zip_mut_with(&self.p, |g, &p| *g = *g + lambda * p);
        let pt = self.p.t();
        Ok(NodeShare {
            iter,
            node: self.id as u64,
            gram: pt.dot(&self.p),
            rhs_q: pt.dot(&y_minus_ds),
            pt_r: pt.dot(&self.r),
            s_arg: self.d.t().dot(&self.r),
            ddiag: self.ddiag.clone(),
            p_dir: delta_inner(&self.bp, &self.p, &gp),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn coefficients(
        &self,
        iter: u64,
        q: &Array2<T>,
        dq: &Array2<T>,
        ds: &Array2<T>,
        lambda: T,
        l1_change: T,
        weight: T,
    ) -> CoefficientShare<T> {
        let dp = &self.bp - &self.p;
        CoefficientShare {
            iter,
            node: self.id as u64,
            coefficients: block_coefficients(
                &self.p.view(),
                &dp.view(),
                &q.view(),
                &dq.view(),
                &self.d.view(),
                &ds.view(),
                &self.r.view(),
                lambda,
                l1_change,
                weight,
            ),
        }
    }
}

fn sorted_by_node<'a, S, F: Fn(&S) -> u64>(
    shares: &'a [S],
    nodes: usize,
    iter_of: impl Fn(&S) -> u64,
    node_of: F,
) -> Result<Vec<&'a S>> {
    if shares.len() != nodes {
        return Err(Error::Protocol(format!(
            "expected {nodes} shares, got {}",
            shares.len()
        )));
    }
    let mut out: Vec<&S> = shares.iter().collect();
    out.sort_by_key(|s| node_of(s));
    for (i, s) in out.iter().enumerate() {
        if node_of(s) != i as u64 {
            return Err(Error::Protocol(format!(
                "shares do not cover nodes 0..{nodes} exactly once"
            )));
        }
        if iter_of(s) != iter_of(out[0]) {
            return Err(Error::Protocol("shares from different iterations".into()));
        }
    }
    Ok(out)
}

/// Reduced first round.
struct Reduced<T> {
    bq: Array2<T>,
    bs: Array2<T>,
    stationarity: T,
    surrogate_gap: T,
}

fn sum_mats<'a, T: Scalar + 'a>(mut it: impl Iterator<Item = &'a Array2<T>>) -> Array2<T> {
    let mut acc = it.next().expect("at least one share").clone();
    for m in it {
        acc += m;
    }
    acc
}

fn reduce_first_round<T: Scalar>(
    data: &ProblemData<T>,
    q: &Array2<T>,
    s: &Array2<T>,
    shares: &[&NodeShare<T>],
) -> Result<Reduced<T>> {
    let (rho, k, i) = (data.rho(), data.num_cols(), data.num_atoms());
    for sh in shares {
        check_shape("gram share", sh.gram.dim(), (rho, rho))?;
        check_shape("rhs share", sh.rhs_q.dim(), (rho, k))?;
        check_shape("gradient share", sh.pt_r.dim(), (rho, k))?;
        check_shape("s argument share", sh.s_arg.dim(), (i, k))?;
        check_shape("ddiag share", (sh.ddiag.len(), 1), (i, 1))?;
    }
    let lambda = data.lambda();

    let mut gram = sum_mats(shares.iter().map(|s| &s.gram));
    add_diag(&mut gram, lambda);
    let rhs = sum_mats(shares.iter().map(|s| &s.rhs_q));
    let bq = Cholesky::new(&gram.view())?.solve_left(&rhs.view())?;

    let dtr = sum_mats(shares.iter().map(|s| &s.s_arg));
    let mut ddiag = shares[0].ddiag.clone();
    for sh in &shares[1..] {
        ddiag += &sh.ddiag;
    }
    let arg = s_argument(&s.view(), &ddiag.view(), &dtr.view());
    let bs = bs_from_argument(&arg.view(), &ddiag.view(), data.mu());

    let mut gq = sum_mats(shares.iter().map(|s| &s.pt_r));
    gq.zip_mut_with(q, |g, &q| *g = *g + lambda * q);
    let p_term = shares.iter().fold(T::zero(), |acc, s| acc + s.p_dir);
    let dd = p_term + delta_inner(&bq, q, &gq) + delta_inner(&bs, s, &dtr);
    let surrogate_gap = dd + data.mu() * l1_change(&s.view(), &bs.view());
    Ok(Reduced {
        bq,
        bs,
        stationarity: dd.abs(),
        surrogate_gap,
    })
}

fn reduce_coefficients<T: Scalar>(shares: &[&CoefficientShare<T>]) -> LineSearchPoly<T> {
    let mut it = shares.iter();
    let first = it.next().expect("at least one share").coefficients;
    it.fold(first, |acc, s| acc + s.coefficients)
}

fn weight<T: Scalar>(nodes: usize) -> T {
    T::one() / T::from_usize(nodes).expect("node count fits the scalar type")
}

fn make_nodes<T: Scalar>(data: &ProblemData<T>, z: &FactorState<T>, part: &Partition) -> Result<Vec<Node<T>>> {
    z.check(data)?;
    if part.num_rows() != data.num_rows() {
        return Err(Error::InvalidArgument(format!(
            "partition covers {} rows, data has {}",
            part.num_rows(),
            data.num_rows()
        )));
    }
    Ok(part
        .ranges()
        .iter()
        .enumerate()
        .map(|(l, r)| Node::new(data, z, l, r.clone()))
        .collect())
}

/// Rows of `bP` owned by node `l`.
pub fn node_best_response_p<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    part: &Partition,
    l: usize,
) -> Result<Array2<T>> {
    let rows = part.range(l)?;
    let mut nodes = make_nodes(data, z, part)?;
    let node = &mut nodes[l];
    debug_assert_eq!(node.p.nrows(), rows.len());
    node.refresh(&z.q, &z.s);
    node.share(0, &z.q, data.lambda())?;
    Ok(std::mem::take(&mut node.bp))
}

/// First-round share of node `l` at `z`.
pub fn node_share<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    part: &Partition,
    l: usize,
    iter: u64,
) -> Result<NodeShare<T>> {
    part.range(l)?;
    let mut nodes = make_nodes(data, z, part)?;
    let node = &mut nodes[l];
    node.refresh(&z.q, &z.s);
    node.share(iter, &z.q, data.lambda())
}

/// Reduces one share per node into the best response and the line-search
/// quartic at `z`. The second round is run for every node in place.
pub fn reduce_and_compute<T: Scalar>(
    data: &ProblemData<T>,
    z: &FactorState<T>,
    part: &Partition,
    shares: &[NodeShare<T>],
) -> Result<(BestResponse<T>, LineSearchPoly<T>)> {
    let nodes_n = part.num_nodes();
    let sorted = sorted_by_node(shares, nodes_n, |s| s.iter, |s| s.node)?;
    let iter = sorted[0].iter;
    let red = reduce_first_round(data, &z.q, &z.s, &sorted)?;

    let mut nodes = make_nodes(data, z, part)?;
    for node in nodes.iter_mut() {
        node.refresh(&z.q, &z.s);
        node.share(iter, &z.q, data.lambda())?;
    }
    let dq = &red.bq - &z.q;
    let ds = &red.bs - &z.s;
    let l1c = data.mu() * l1_change(&z.s.view(), &red.bs.view());
    let coef: Vec<CoefficientShare<T>> = nodes
        .iter()
        .map(|n| n.coefficients(iter, &z.q, &dq, &ds, data.lambda(), l1c, weight(nodes_n)))
        .collect();
    let poly = reduce_coefficients(&coef.iter().collect::<Vec<_>>());

    let blocks: Vec<ArrayView2<T>> = nodes.iter().map(|n| n.bp.view()).collect();
    let bp = ndarray::concatenate(Axis(0), &blocks).expect("blocks share a column count");
    Ok((
        BestResponse {
            bp,
            bq: red.bq,
            bs: red.bs,
        },
        poly,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistributedConfig {
    pub nodes: usize,
    /// Worker threads; `None` reads [`THREADS_ENV`], falling back to the
    /// available parallelism. Never more than `nodes`.
    pub threads: Option<usize>,
    /// Keep the encoded form of every message.
    pub record_messages: bool,
}

impl DistributedConfig {
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            threads: None,
            record_messages: false,
        }
    }

    fn thread_count(&self) -> usize {
        let cap = self
            .threads
            .or_else(|| {
                std::env::var(THREADS_ENV)
                    .ok()
                    .and_then(|v| v.trim().parse::<usize>().ok())
            })
            .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
            .unwrap_or(1);
        cap.clamp(1, self.nodes.max(1))
    }
}

/// Message accounting for a distributed run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExchangeStats {
    pub messages: usize,
    pub bytes: usize,
    /// Scalars exchanged for the line search in each iteration that took a
    /// step: four per node.
    pub line_search_scalars: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DistributedOutcome<T> {
    pub outcome: SolveOutcome<T>,
    pub stats: ExchangeStats,
    /// Reduced quartic of every iteration that took a step.
    pub coefficients: Vec<LineSearchPoly<T>>,
    /// Encoded messages in send order, when recording was requested.
    pub log: Vec<Vec<u8>>,
}

struct Bus {
    record: bool,
    stats: ExchangeStats,
    log: Vec<Vec<u8>>,
}

impl Bus {
    fn send<T: Scalar>(&mut self, msg: Message<T>) -> Message<T> {
        self.stats.messages += 1;
        self.stats.bytes += msg.encoded_len();
        if self.record {
            self.log.push(msg.encode());
        }
        msg
    }
}

/// The parallel best-response iteration with the nodes of `dcfg` working on
/// their row blocks concurrently. Traces match [`crate::pbr::solve`].
pub fn distributed_solve<T: Scalar>(
    data: &ProblemData<T>,
    z0: &FactorState<T>,
    cfg: &SolverConfig<T>,
    dcfg: &DistributedConfig,
) -> Result<DistributedOutcome<T>> {
    cfg.validate()?;
    let part = partition_rows(data.num_rows(), dcfg.nodes)?;
    let mut nodes = make_nodes(data, z0, &part)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(dcfg.thread_count())
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    let clock = Instant::now();
    let elapsed = || {
        if cfg.trace_timing {
            clock.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };
    let lambda = data.lambda();
    let mu = data.mu();
    let w = weight::<T>(part.num_nodes());
    let mut bus = Bus {
        record: dcfg.record_messages,
        stats: ExchangeStats::default(),
        log: Vec::new(),
    };

    let mut q = z0.q.clone();
    let mut s = z0.s.clone();
    let objective_round = |nodes: &mut Vec<Node<T>>, bus: &mut Bus, iter: u64, q: &Array2<T>, s: &Array2<T>| {
        let norms: Vec<(T, T)> = pool.install(|| nodes.par_iter_mut().map(|n| n.refresh(q, s)).collect());
        for (l, &(resid2, p2)) in norms.iter().enumerate() {
            bus.send(Message::ObjectiveShare {
                iter,
                node: l as u64,
                resid2,
                p2,
            });
        }
        let resid2 = norms[1..].iter().fold(norms[0].0, |a, n| a + n.0);
        let p2 = norms[1..].iter().fold(norms[0].1, |a, n| a + n.1);
        let half = T::lit(0.5);
        let obj = half * resid2 + half * lambda * (p2 + fro2(&q.view())) + mu * l1(&s.view());
        if obj.is_finite() {
            Ok(obj)
        } else {
            Err(Error::Numeric(format!("objective became {obj}")))
        }
    };

    let mut objective = objective_round(&mut nodes, &mut bus, 0, &q, &s)?;
    let initial_objective = objective;
    let mut trace = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut coefficients = Vec::new();
    let mut stop = StopReason::Budget;

    for it in 1..=cfg.max_iters {
        let iter = it as u64;
        let Message::IterationBroadcast { q: bq_in, s: bs_in, .. } =
            bus.send(Message::IterationBroadcast { iter, q: q.clone(), s: s.clone() })
        else {
            unreachable!()
        };
        let shares = pool.install(|| {
            nodes
                .par_iter_mut()
                .map(|n| n.share(iter, &bq_in, lambda))
                .collect::<Result<Vec<_>>>()
        })?;
        let shares: Vec<NodeShare<T>> = shares
            .into_iter()
            .map(|sh| match bus.send(Message::NodeShare(sh)) {
                Message::NodeShare(sh) => sh,
                _ => unreachable!(),
            })
            .collect();
        let sorted = sorted_by_node(&shares, part.num_nodes(), |s| s.iter, |s| s.node)?;
        let red = reduce_first_round(data, &bq_in, &bs_in, &sorted)?;

        if red.stationarity <= cfg.delta {
            trace.push(IterationTrace {
                iter: it,
                objective,
                stationarity: red.stationarity,
                gamma: T::zero(),
                elapsed_seconds: elapsed(),
                surrogate_gap: red.surrogate_gap,
            });
            stop = StopReason::Converged;
            break;
        }

        let Message::BestResponseBroadcast { bq, bs, .. } = bus.send(Message::BestResponseBroadcast {
            iter,
            bq: red.bq,
            bs: red.bs,
        }) else {
            unreachable!()
        };
        let gamma = match cfg.stepsize {
            StepRule::ExactLineSearch => {
                let dq = &bq - &q;
                let ds = &bs - &s;
                let l1c = mu * l1_change(&s.view(), &bs.view());
                let coef: Vec<CoefficientShare<T>> = pool.install(|| {
                    nodes
                        .par_iter()
                        .map(|n| n.coefficients(iter, &q, &dq, &ds, lambda, l1c, w))
                        .collect()
                });
                for c in &coef {
                    bus.send(Message::CoefficientShare(*c));
                }
                bus.stats
                    .line_search_scalars
                    .push(coef.len() * CoefficientShare::<T>::SCALARS);
                let sorted = sorted_by_node(&coef, part.num_nodes(), |c| c.iter, |c| c.node)?;
                let poly = reduce_coefficients(&sorted);
                coefficients.push(poly);
                exact_step(&poly)?.gamma
            }
            StepRule::Constant(g) => g,
        };
        bus.send(Message::StepDecision { iter, gamma });

        pool.install(|| {
            nodes
                .par_iter_mut()
                .for_each(|n| n.p = lerp(&n.p, &n.bp, gamma))
        });
        q = lerp(&q, &bq, gamma);
        s = lerp(&s, &bs, gamma);
        objective = objective_round(&mut nodes, &mut bus, iter, &q, &s)?;
        trace.push(IterationTrace {
            iter: it,
            objective,
            stationarity: red.stationarity,
            gamma,
            elapsed_seconds: elapsed(),
            surrogate_gap: red.surrogate_gap,
        });
    }

    let blocks: Vec<ArrayView2<T>> = nodes.iter().map(|n| n.p.view()).collect();
    let p = ndarray::concatenate(Axis(0), &blocks).expect("blocks share a column count");
    Ok(DistributedOutcome {
        outcome: SolveOutcome {
            state: FactorState { p, q, s },
            trace,
            stop,
            initial_objective,
        },
        stats: bus.stats,
        coefficients,
        log: bus.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::best_response::compute_best_response;
    use crate::line_search::ls_coefficients;
    use crate::pbr::solve;
    use ndarray::array;

    fn small() -> ProblemData<f64> {
        ProblemData::new(
            array![
                [1.0, 2.0, 0.0, 1.0],
                [0.5, -1.0, 3.0, 0.0],
                [0.0, 0.2, 0.1, -2.0],
                [1.5, 0.0, -0.3, 0.7]
            ],
            array![[1.0, 0.0, 0.5], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            0.3,
            0.2,
            2,
        )
        .unwrap()
    }

    #[test]
    fn partitions() {
        let r = |n, l| partition_rows(n, l).unwrap().ranges().to_vec();
        assert_eq!(r(10, 1), vec![0..10]);
        assert_eq!(r(10, 3), vec![0..4, 4..7, 7..10]);
        assert_eq!(r(5, 5), (0..5).map(|i| i..i + 1).collect::<Vec<_>>());
        assert!(partition_rows(3, 4).is_err());
        assert!(partition_rows(3, 0).is_err());
    }

    #[test]
    fn single_node_matches_monolithic_bitwise() {
        let data = small();
        let z0 = FactorState::gaussian(&data, 0.1, 3);
        let cfg = SolverConfig {
            trace_timing: false,
            ..SolverConfig::new(1e-10, 50)
        };
        let mono = solve(&data, &z0, &cfg).unwrap();
        let dist = distributed_solve(&data, &z0, &cfg, &DistributedConfig::new(1)).unwrap();
        assert_eq!(mono.trace, dist.outcome.trace);
        assert_eq!(mono.state, dist.outcome.state);
        assert_eq!(mono.initial_objective, dist.outcome.initial_objective);
    }

    #[test]
    fn reduction_matches_monolithic() {
        let data = small();
        let z = FactorState::gaussian(&data, 0.5, 4);
        let br = compute_best_response(&data, &z).unwrap();
        let poly = ls_coefficients(&data, &z, &br).unwrap();
        for l in [1, 2, 4] {
            let part = partition_rows(4, l).unwrap();
            let mut shares: Vec<_> = (0..l).map(|i| node_share(&data, &z, &part, i, 1).unwrap()).collect();
            shares.reverse();
            let (dbr, dpoly) = reduce_and_compute(&data, &z, &part, &shares).unwrap();
            for (x, y) in dbr.bp.iter().zip(br.bp.iter()) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
            for (x, y) in [(dpoly.a, poly.a), (dpoly.b, poly.b), (dpoly.c, poly.c), (dpoly.d, poly.d)] {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
            }
            shares.pop();
            assert!(matches!(
                reduce_and_compute(&data, &z, &part, &shares),
                Err(Error::Protocol(_))
            ));
        }
    }

    #[test]
    fn node_blocks_concatenate_to_bp() {
        let data = small();
        let z = FactorState::gaussian(&data, 0.5, 8);
        let bp = crate::best_response::best_response_p(&data, &z).unwrap();
        let part = partition_rows(4, 3).unwrap();
        for l in 0..3 {
            let blk = node_best_response_p(&data, &z, &part, l).unwrap();
            let rows = part.range(l).unwrap();
            assert_eq!(blk, bp.slice(ndarray::s![rows, ..]).to_owned());
        }
    }

    #[test]
    fn messages_round_trip() {
        let data = small();
        let z = FactorState::gaussian(&data, 0.5, 1);
        let cfg = SolverConfig::new(1e-12, 3);
        let out = distributed_solve(
            &data,
            &z,
            &cfg,
            &DistributedConfig {
                nodes: 2,
                threads: Some(2),
                record_messages: true,
            },
        )
        .unwrap();
        assert_eq!(out.log.len(), out.stats.messages);
        let mut bytes = 0;
        for buf in &out.log {
            let msg = Message::<f64>::decode(buf).unwrap();
            assert_eq!(msg.encode(), *buf);
            assert_eq!(msg.encoded_len(), buf.len());
            bytes += buf.len();
            if let Message::CoefficientShare(_) = msg {
                assert_eq!(buf.len(), 1 + 16 + 32);
            }
        }
        assert_eq!(bytes, out.stats.bytes);
        assert!(out.stats.line_search_scalars.iter().all(|&n| n == 8));
        assert!(Message::<f64>::decode(&out.log[0][..10]).is_err());
        assert!(Message::<f64>::decode(&[9]).is_err());
    }
}
