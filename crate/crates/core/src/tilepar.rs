//! Tile-parallel GGR over a `k×k` grid of workers.
//!
//! The matrix is cut into `block×block` tiles dealt out block-cyclically:
//! tile `(bi, bj)` belongs to worker `(bi mod k, bj mod k)`. Each worker
//! thread owns its tiles outright; the coordinator (the calling thread) only
//! exchanges small immutable messages with them. Per pivot column:
//!
//! 1. owners of the pivot column send their segments with local suffix sums
//!    of squares; the coordinator chains the segment carries bottom-up and
//!    finishes the transform;
//! 2. the transform is broadcast and every worker computes local suffix inner
//!    sums for its trailing segments;
//! 3. the coordinator chains those carries, hands each segment its carry and
//!    the old value of the row just above it, and the workers update in place.
//!
//! A segment is a maximal run of rows in one column with a single owner. With
//! `k = 1` there is one segment per column and the arithmetic is exactly that
//! of [`ggr_factorize`](crate::ggr::ggr_factorize).

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use crate::counting::{cgr_count_formula, Arith, Channel, OpCounter, Tally};
use crate::error::{Error, Result};
use crate::factorization::{normalize_signs, FactorizationResult};
use crate::ggr::{kl_vectors_with, ColumnTransform};
use crate::matcore::DenseMatrix;

/// Default per-word transfer cost of the cost model.
pub const DEFAULT_GAMMA: f64 = 0.1;

type WorkerId = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub n: usize,
    pub k: usize,
    pub block: usize,
}

/// Validates and builds a grid. `block` must divide `n`.
pub fn partition(n: usize, k: usize, block: usize) -> Result<TileGrid> {
    let fail = |reason| Err(Error::GridConfig { n, k, block, reason });
    if n == 0 {
        return fail("n must be positive");
    }
    if k == 0 {
        return fail("k must be positive");
    }
    if block == 0 || !n.is_multiple_of(block) {
        return fail("block must divide n");
    }
    Ok(TileGrid { n, k, block })
}

impl TileGrid {
    /// Grid with the `n/k` block edge. Needs `k | n`.
    pub fn with_default_block(n: usize, k: usize) -> Result<Self> {
        if k == 0 || !n.is_multiple_of(k) {
            return Err(Error::GridConfig {
                n,
                k,
                block: n.checked_div(k).unwrap_or(0),
                reason: "k must divide n for the default block size",
            });
        }
        partition(n, k, n / k)
    }

    /// Tiles per side.
    pub fn blocks_per_side(&self) -> usize {
        self.n / self.block
    }

    pub fn block_owner(&self, bi: usize, bj: usize) -> WorkerId {
        (bi % self.k, bj % self.k)
    }

    pub fn owner(&self, i: usize, j: usize) -> WorkerId {
        self.block_owner(i / self.block, j / self.block)
    }

    fn row_owner(&self, i: usize) -> usize {
        (i / self.block) % self.k
    }

    fn col_owner(&self, j: usize) -> usize {
        (j / self.block) % self.k
    }

    pub fn workers(&self) -> impl Iterator<Item = WorkerId> + '_ {
        (0..self.k).flat_map(move |r| (0..self.k).map(move |c| (r, c)))
    }

    /// Row ranges inside `start..end` with a single owning grid row.
    fn segments(&self, start: usize, end: usize) -> Vec<(usize, usize)> {
        if start >= end {
            return Vec::new();
        }
        if self.k == 1 {
            return vec![(start, end)];
        }
        let mut out = Vec::new();
        let mut s = start;
        while s < end {
            let e = ((s / self.block + 1) * self.block).min(end);
            out.push((s, e));
            s = e;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Cost model

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    /// Multiply/divide units of the one-worker schedule.
    pub serial_units: u64,
    /// Makespan of the `k×k` schedule.
    pub parallel_units: u64,
    pub speedup: f64,
    /// Word transfers between distinct workers, times `γ`, rounded up.
    pub comm_units: u64,
    /// Longest chain of dependent multiply/divide units.
    pub critical_path_units: u64,
}

/// Simulates the tile schedule with unit cost per multiply/divide and `gamma`
/// per word that crosses workers. Each pivot column costs, in sequence:
///
/// - tail norms: the largest number of squared entries on one owner;
/// - gathering the pivot column on its top owner;
/// - the `k`/`l` coefficients on that owner (`3L − 4`);
/// - broadcasting the transform (`4L` words per receiving worker);
/// - the trailing update, as the slowest worker's element updates (2 units in
///   the pivot row, 3 elsewhere) plus its received carry words.
pub fn cost_model_run(n: usize, k: usize, block: usize, gamma: f64) -> Result<CostReport> {
    let grid = partition(n, k, block)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be finite and nonnegative, got {gamma}")));
    }
    let serial_units = cgr_count_formula(n as u64)?;
    let mut makespan = 0.0f64;
    let mut comm = 0.0f64;
    let mut critical = 0u64;
    let mut rows_of = vec![0usize; k];
    let mut cols_of = vec![0usize; k];
    let mut bnd_above = vec![0usize; k];
    let mut bnd_below = vec![0usize; k];
    for p in 0..n.saturating_sub(1) {
        let len = n - p;
        rows_of.iter_mut().for_each(|x| *x = 0);
        cols_of.iter_mut().for_each(|x| *x = 0);
        bnd_above.iter_mut().for_each(|x| *x = 0);
        bnd_below.iter_mut().for_each(|x| *x = 0);
        for i in p..n {
            rows_of[grid.row_owner(i)] += 1;
        }
        for j in p + 1..n {
            cols_of[grid.col_owner(j)] += 1;
        }
        for (s, _) in grid.segments(p, n).into_iter().skip(1) {
            bnd_above[grid.row_owner(s - 1)] += 1;
            bnd_below[grid.row_owner(s)] += 1;
        }

        let pivot_owner = grid.row_owner(p);
        let norm = *rows_of.iter().max().unwrap_or(&0) as f64;
        let gathered = (len - rows_of[pivot_owner]) as f64;
        let kl = (3 * len - 4) as f64;
        let bcast = if k > 1 { 4.0 * len as f64 } else { 0.0 };
        let mut update = 0.0f64;
        let mut received = 0.0f64;
        for wr in 0..k {
            let pivot_row = usize::from(wr == pivot_owner);
            let units = 3 * rows_of[wr] - pivot_row;
            let words = bnd_above[wr] + bnd_below[wr];
            for &cols in &cols_of {
                let recv = (cols * words) as f64;
                update = update.max((cols * units) as f64 + gamma * recv);
                received += recv;
            }
        }
        let workers_with_work = cols_of.iter().filter(|&&c| c > 0).count() * rows_of.iter().filter(|&&r| r > 0).count();
        let bcast_words = bcast * workers_with_work.saturating_sub(1) as f64;
        makespan += norm + gamma * gathered + kl + gamma * bcast + update;
        comm += gamma * (gathered + bcast_words + received);
        // One square, the k/l chain (mul then div), and an element update
        // (suffix mul, coefficient mul, combine).
        critical += 1 + 2 + 3;
    }
    let parallel_units = makespan.ceil() as u64;
    let speedup = if parallel_units == 0 {
        1.0
    } else {
        serial_units as f64 / parallel_units as f64
    };
    Ok(CostReport {
        serial_units,
        parallel_units,
        speedup,
        comm_units: comm.ceil() as u64,
        critical_path_units: critical,
    })
}

// ---------------------------------------------------------------------------
// Threaded execution

/// One segment of the pivot column with local suffix sums of squares.
#[derive(Debug)]
struct NormSegment {
    start: usize,
    v: Vec<f64>,
    ss: Vec<f64>,
}

/// A trailing-column segment's contribution to the inner-sum chain.
#[derive(Debug, Clone, Copy)]
struct PartialSegment {
    col: usize,
    start: usize,
    /// Local inner sum of the segment's top contributing row, if any.
    total: Option<f64>,
    /// Old value of the segment's bottom row.
    bottom_old: f64,
}

/// What a segment needs from its neighbours to apply the update.
#[derive(Debug, Clone, Copy)]
struct Link {
    carry: Option<f64>,
    above_old: Option<f64>,
}

enum Command {
    Norms { p: usize },
    Partials { p: usize, t: Arc<ColumnTransform> },
    Apply { p: usize, t: Arc<ColumnTransform>, links: Vec<Link> },
    Gather,
}

enum Body {
    Norms(Vec<NormSegment>),
    Partials(Vec<PartialSegment>),
    Applied,
    Blocks(Vec<((usize, usize), DenseMatrix)>, OpCounter),
    Failed(String),
}

struct Reply {
    worker: WorkerId,
    body: Body,
}

struct Pending {
    col: usize,
    start: usize,
    end: usize,
    /// Local inclusive suffix sums for rows `start.max(p + 1)..end`.
    sums: Vec<f64>,
}

struct Worker {
    id: WorkerId,
    grid: TileGrid,
    local_side: usize,
    tiles: Vec<DenseMatrix>,
    tally: Tally,
    pending: Vec<Pending>,
    fault: Option<(WorkerId, usize)>,
}

impl Worker {
    fn new(id: WorkerId, grid: TileGrid, a: &DenseMatrix, fault: Option<(WorkerId, usize)>) -> Self {
        let nb = grid.blocks_per_side();
        let local_side = nb.div_ceil(grid.k);
        let b = grid.block;
        let mut tiles = vec![DenseMatrix::zeros(0, 0); local_side * local_side];
        for bi in (id.0..nb).step_by(grid.k) {
            for bj in (id.1..nb).step_by(grid.k) {
                tiles[(bi / grid.k) * local_side + bj / grid.k] = a.submatrix(bi * b, bj * b, b, b);
            }
        }
        Self {
            id,
            grid,
            local_side,
            tiles,
            tally: Tally::new(),
            pending: Vec::new(),
            fault,
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> (usize, usize, usize) {
        let b = self.grid.block;
        let (bi, bj) = (i / b, j / b);
        debug_assert_eq!(self.grid.block_owner(bi, bj), self.id);
        ((bi / self.grid.k) * self.local_side + bj / self.grid.k, i % b, j % b)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        let (t, r, c) = self.slot(i, j);
        self.tiles[t][(r, c)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, x: f64) {
        let (t, r, c) = self.slot(i, j);
        self.tiles[t][(r, c)] = x;
    }

    fn my_segments(&self, start: usize, end: usize) -> Vec<(usize, usize)> {
        self.grid
            .segments(start, end)
            .into_iter()
            .filter(|&(s, _)| self.grid.row_owner(s) == self.id.0)
            .collect()
    }

    fn my_columns(&self, from: usize) -> impl Iterator<Item = usize> + '_ {
        (from..self.grid.n).filter(|&j| self.grid.col_owner(j) == self.id.1)
    }

    fn handle(&mut self, cmd: Command) -> Body {
        match cmd {
            Command::Norms { p } => Body::Norms(self.norms(p)),
            Command::Partials { p, t } => Body::Partials(self.partials(p, &t)),
            Command::Apply { p, t, links } => {
                self.apply(p, &t, &links);
                Body::Applied
            }
            Command::Gather => {
                let nb = self.grid.blocks_per_side();
                let mut out = Vec::new();
                for bi in (self.id.0..nb).step_by(self.grid.k) {
                    for bj in (self.id.1..nb).step_by(self.grid.k) {
                        let idx = (bi / self.grid.k) * self.local_side + bj / self.grid.k;
                        out.push(((bi, bj), std::mem::replace(&mut self.tiles[idx], DenseMatrix::zeros(0, 0))));
                    }
                }
                Body::Blocks(out, self.tally.snapshot(Channel::RPath))
            }
        }
    }

    fn norms(&mut self, p: usize) -> Vec<NormSegment> {
        if self.fault == Some((self.id, p)) {
            panic!("injected fault at pivot {p}");
        }
        if self.grid.col_owner(p) != self.id.1 {
            return Vec::new();
        }
        let ops = &self.tally;
        self.my_segments(p, self.grid.n)
            .into_iter()
            .map(|(s, e)| {
                let v: Vec<f64> = (s..e).map(|i| self.get(i, p)).collect();
                let mut ss = vec![0.0; v.len()];
                let last = v.len() - 1;
                ss[last] = ops.mul(v[last], v[last]);
                for t in (0..last).rev() {
                    ss[t] = ops.add(ops.mul(v[t], v[t]), ss[t + 1]);
                }
                NormSegment { start: s, v, ss }
            })
            .collect()
    }

    fn partials(&mut self, p: usize, t: &ColumnTransform) -> Vec<PartialSegment> {
        self.pending.clear();
        let la = t.active;
        if la < 2 {
            return Vec::new();
        }
        let segments = self.my_segments(p, p + la);
        let columns: Vec<usize> = self.my_columns(p + 1).collect();
        let mut out = Vec::new();
        for &j in &columns {
            for &(s, e) in &segments {
                let top = s.max(p + 1);
                let mut sums = vec![0.0; e - top];
                let ops = &self.tally;
                if e > top {
                    let last = e - top - 1;
                    sums[last] = ops.mul(t.v[e - 1 - p], self.get(e - 1, j));
                    for r in (top..e - 1).rev() {
                        let idx = r - top;
                        sums[idx] = ops.add(sums[idx + 1], ops.mul(t.v[r - p], self.get(r, j)));
                    }
                }
                out.push(PartialSegment {
                    col: j,
                    start: s,
                    total: sums.first().copied(),
                    bottom_old: self.get(e - 1, j),
                });
                self.pending.push(Pending {
                    col: j,
                    start: s,
                    end: e,
                    sums,
                });
            }
        }
        out
    }

    fn apply(&mut self, p: usize, t: &ColumnTransform, links: &[Link]) {
        let la = t.active;
        let pending = std::mem::take(&mut self.pending);
        debug_assert_eq!(pending.len(), links.len());
        for (seg, link) in pending.iter().zip(links) {
            self.apply_segment(p, t, seg, *link);
        }
        if self.grid.col_owner(p) == self.id.1 {
            for (s, e) in self.my_segments(p, self.grid.n) {
                for i in s..e {
                    if i == p {
                        if la >= 2 {
                            self.set(p, p, t.q[0]);
                        }
                    } else {
                        self.set(i, p, 0.0);
                    }
                }
            }
        }
    }

    fn apply_segment(&mut self, p: usize, t: &ColumnTransform, seg: &Pending, link: Link) {
        let (s, e, j) = (seg.start, seg.end, seg.col);
        let top = s.max(p + 1);
        let last = t.active - 1;
        let tally = std::mem::take(&mut self.tally);
        let ops = &tally;
        let global = |r: usize| {
            let local = seg.sums[r - top];
            match link.carry {
                Some(c) => ops.add(local, c),
                None => local,
            }
        };
        for r in (s..e).rev() {
            let row = r - p;
            let old = self.get(r, j);
            let new = if row == 0 {
                let below = if p + 1 < e { global(p + 1) } else { link.carry.expect("carry below pivot row") };
                ops.div(ops.add(ops.mul(t.v[0], old), below), t.q[0])
            } else {
                let above = if r == s { link.above_old.expect("value above segment") } else { self.get(r - 1, j) };
                if row == last {
                    ops.sub(ops.mul(t.c_last, old), ops.mul(t.s_last, above))
                } else {
                    ops.sub(ops.mul(t.k[row - 1], global(r)), ops.mul(t.l[row - 1], above))
                }
            };
            self.set(r, j, new);
        }
        self.tally = tally;
    }
}

fn worker_loop(mut w: Worker, commands: Receiver<Command>, replies: Sender<Reply>) {
    let id = w.id;
    while let Ok(cmd) = commands.recv() {
        let gather = matches!(cmd, Command::Gather);
        let body = match catch_unwind(AssertUnwindSafe(|| w.handle(cmd))) {
            Ok(body) => body,
            Err(payload) => {
                let reason = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "worker panicked".into());
                let _ = replies.send(Reply {
                    worker: id,
                    body: Body::Failed(reason),
                });
                return;
            }
        };
        if replies.send(Reply { worker: id, body }).is_err() || gather {
            return;
        }
    }
}

struct Coordinator {
    grid: TileGrid,
    senders: BTreeMap<WorkerId, Sender<Command>>,
    replies: Receiver<Reply>,
    tally: Tally,
}

impl Coordinator {
    /// Sends one command per worker and collects every reply, ordered by
    /// worker id so that later combination does not depend on timing.
    fn round(&self, mut make: impl FnMut(WorkerId) -> Command) -> Result<BTreeMap<WorkerId, Body>> {
        for (&id, tx) in &self.senders {
            tx.send(make(id)).map_err(|_| Error::WorkerFailed {
                worker: id,
                reason: "worker hung up".into(),
            })?;
        }
        let mut out = BTreeMap::new();
        while out.len() < self.senders.len() {
            let reply = self.replies.recv().map_err(|_| Error::WorkerFailed {
                worker: (usize::MAX, usize::MAX),
                reason: "all workers hung up".into(),
            })?;
            if let Body::Failed(reason) = reply.body {
                return Err(Error::WorkerFailed {
                    worker: reply.worker,
                    reason,
                });
            }
            out.insert(reply.worker, reply.body);
        }
        Ok(out)
    }

    fn transform(&self, p: usize, parts: BTreeMap<WorkerId, Body>) -> ColumnTransform {
        let mut segments: Vec<NormSegment> = parts
            .into_values()
            .flat_map(|b| match b {
                Body::Norms(s) => s,
                _ => Vec::new(),
            })
            .collect();
        segments.sort_by_key(|s| s.start);
        let len = self.grid.n - p;
        let mut v = vec![0.0; len];
        let mut ss = vec![0.0; len];
        let ops = &self.tally;
        let mut carry: Option<f64> = None;
        for seg in segments.iter().rev() {
            let off = seg.start - p;
            v[off..off + seg.v.len()].copy_from_slice(&seg.v);
            for (t, &local) in seg.ss.iter().enumerate() {
                ss[off + t] = match carry {
                    Some(c) => ops.add(local, c),
                    None => local,
                };
            }
            carry = Some(ss[off]);
        }
        // As in the sequential recurrence, the last entry needs no square root.
        let q: Vec<f64> = (0..len)
            .map(|t| if t + 1 == len { v[t].abs() } else { ops.sqrt(ss[t]) })
            .collect();
        kl_vectors_with(&v, &q, ops)
    }

    fn links(&self, parts: BTreeMap<WorkerId, Body>) -> BTreeMap<WorkerId, Vec<Link>> {
        let mut by_col: BTreeMap<usize, Vec<(usize, WorkerId, usize, PartialSegment)>> = BTreeMap::new();
        let mut out: BTreeMap<WorkerId, Vec<Link>> = BTreeMap::new();
        for (id, body) in parts {
            let Body::Partials(list) = body else { continue };
            let links = out.entry(id).or_default();
            for (idx, seg) in list.into_iter().enumerate() {
                links.push(Link {
                    carry: None,
                    above_old: None,
                });
                by_col.entry(seg.col).or_default().push((seg.start, id, idx, seg));
            }
        }
        let ops = &self.tally;
        for segs in by_col.values_mut() {
            segs.sort_by_key(|s| s.0);
            let mut carry: Option<f64> = None;
            for pos in (0..segs.len()).rev() {
                let (_, id, idx, seg) = segs[pos];
                let link = &mut out.get_mut(&id).expect("worker listed")[idx];
                link.carry = carry;
                link.above_old = pos.checked_sub(1).map(|up| segs[up].3.bottom_old);
                if let Some(total) = seg.total {
                    carry = Some(match carry {
                        Some(c) => ops.add(total, c),
                        None => total,
                    });
                }
            }
        }
        out
    }
}

/// Factorizes a square matrix on a `k×k` worker grid. `R` is sign-normalized
/// and `Q` is not formed.
pub fn parallel_ggr(a: &DenseMatrix, grid: &TileGrid) -> Result<FactorizationResult> {
    run(a, grid, None)
}

fn run(a: &DenseMatrix, grid: &TileGrid, fault: Option<(WorkerId, usize)>) -> Result<FactorizationResult> {
    if a.rows() != a.cols() || a.rows() != grid.n {
        return Err(Error::DimensionMismatch {
            op: "parallel_ggr",
            left: a.shape(),
            right: (grid.n, grid.n),
        });
    }
    let grid = partition(grid.n, grid.k, grid.block)?;
    let start = Instant::now();
    let n = grid.n;
    let (reply_tx, reply_rx) = channel();
    let mut senders = BTreeMap::new();
    let mut inboxes = Vec::new();
    for id in grid.workers() {
        let (tx, rx) = channel();
        senders.insert(id, tx);
        inboxes.push((Worker::new(id, grid, a, fault), rx, reply_tx.clone()));
    }
    drop(reply_tx);
    let coordinator = Coordinator {
        grid,
        senders,
        replies: reply_rx,
        tally: Tally::new(),
    };

    let outcome = thread::scope(|scope| {
        for (worker, rx, tx) in inboxes {
            scope.spawn(move || worker_loop(worker, rx, tx));
        }
        let result = drive_pivots(&coordinator, n);
        let gathered = result.and_then(|()| coordinator.round(|_| Command::Gather));
        // Closing the command channels lets every worker exit.
        drop(coordinator.senders);
        gathered.map(|g| (g, coordinator.tally))
    })?;

    let (gathered, tally) = outcome;
    let mut r = DenseMatrix::zeros(n, n);
    let mut counts = OpCounter::new(Channel::RPath);
    for body in gathered.into_values() {
        if let Body::Blocks(tiles, worker_counts) = body {
            for ((bi, bj), tile) in tiles {
                r.set_submatrix(bi * grid.block, bj * grid.block, &tile);
            }
            counts.merge(&worker_counts);
        }
    }
    tally.flush_into(&mut counts);
    normalize_signs(&mut r, None);
    Ok(FactorizationResult {
        r,
        q: None,
        counts,
        q_counts: OpCounter::new(Channel::QPath),
        elapsed: start.elapsed().as_secs_f64(),
    })
}

fn drive_pivots(c: &Coordinator, n: usize) -> Result<()> {
    for p in 0..n.saturating_sub(1) {
        let norms = c.round(|_| Command::Norms { p })?;
        let t = Arc::new(c.transform(p, norms));
        let partials = c.round(|_| Command::Partials { p, t: Arc::clone(&t) })?;
        let mut links = c.links(partials);
        c.round(|id| Command::Apply {
            p,
            t: Arc::clone(&t),
            links: links.remove(&id).unwrap_or_default(),
        })?;
    }
    Ok(())
}
