//! Polyhedral geodesics: straight walks (discrete exponential map), shortest
//! paths by corridor unfolding, and parallel transport across edges.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use nalgebra::{Matrix2, Rotation3, Unit, Vector2};

use crate::error::{Error, Result};
use crate::mesh::{local_index, Embedding, SurfacePoint, TangentVector, Vec3};

pub type Vec2 = Vector2<f64>;

/// Default bound on a single walk, as a fraction of the mesh diameter.
pub const MAX_STEP_FRACTION: f64 = 0.5;
const MAX_CROSSINGS: usize = 1_000_000;
const MAX_STRAIGHTEN_ITERS: usize = 10_000;

/// Barycentric change per unit ambient displacement `d` within triangle `t`.
fn bary_direction<E: Embedding + ?Sized>(mesh: &E, t: usize, d: &Vec3) -> [f64; 3] {
    let [p0, p1, p2] = mesh.corners(t);
    let (e1, e2) = (p1 - p0, p2 - p0);
    let g = Matrix2::new(e1.dot(&e1), e1.dot(&e2), e1.dot(&e2), e2.dot(&e2));
    let rhs = Vector2::new(d.dot(&e1), d.dot(&e2));
    let x = g.lu().solve(&rhs).unwrap_or_else(Vector2::zeros);
    [-x[0] - x[1], x[0], x[1]]
}

/// Rotation taking the plane of `t` onto the plane of its neighbour across
/// local edge `k`, about the shared edge.
fn hinge_rotation<E: Embedding + ?Sized>(mesh: &E, t: usize, k: usize, t2: usize) -> Rotation3<f64> {
    let [a, b] = {
        let c = mesh.corners(t);
        [c[k], c[(k + 1) % 3]]
    };
    let axis = Unit::new_normalize(b - a);
    let n1 = mesh.triangle_normal(t);
    let n2 = mesh.triangle_normal(t2);
    let angle = n1.cross(&n2).dot(&axis).atan2(n1.dot(&n2));
    Rotation3::from_axis_angle(&axis, angle)
}

fn project_to_plane<E: Embedding + ?Sized>(mesh: &E, t: usize, v: Vec3) -> Vec3 {
    let n = mesh.triangle_normal(t);
    v - n * n.dot(&v)
}

/// Result of a straight walk.
#[derive(Debug, Clone)]
pub struct Walk {
    pub end: SurfacePoint,
    /// Unit direction of travel at the end point (in the end triangle's plane).
    pub direction: Vec3,
    pub crossings: usize,
}

/// Walks `length` along unit direction `dir` from `p`, crossing edges by
/// rotating about them. Vectors in `carry` are transported along the way.
pub fn walk_straight<E: Embedding + ?Sized>(
    mesh: &E,
    p: &SurfacePoint,
    dir: &Vec3,
    length: f64,
    carry: &mut [Vec3],
) -> Result<Walk> {
    let topo = mesh.topology();
    let mut t = p.triangle;
    let mut b = p.bary;
    let mut d = project_to_plane(mesh, t, *dir);
    let dn = d.norm();
    if length <= 0.0 || dn == 0.0 {
        return Ok(Walk { end: *p, direction: if dn > 0.0 { d / dn } else { d }, crossings: 0 });
    }
    d /= dn;
    let mut remaining = length;
    let mut entry: Option<usize> = None;
    for crossings in 0..MAX_CROSSINGS {
        let db = bary_direction(mesh, t, &d);
        let mut exit: Option<(usize, f64)> = None;
        for i in 0..3 {
            if Some(i) == entry || db[i] >= 0.0 {
                continue;
            }
            let s = (-b[i] / db[i]).max(0.0);
            if exit.map_or(true, |(_, best)| s < best) {
                exit = Some((i, s));
            }
        }
        match exit {
            Some((i, s)) if s < remaining => {
                for j in 0..3 {
                    b[j] += s * db[j];
                }
                b[i] = 0.0;
                remaining -= s;
                let k = (i + 1) % 3;
                let adj = topo.adjacent(t, k);
                let rot = hinge_rotation(mesh, t, k, adj.triangle);
                let k2 = adj.edge;
                let mut nb = [0.0; 3];
                nb[k2] = b[(k + 1) % 3];
                nb[(k2 + 1) % 3] = b[k];
                let s2 = nb[k2] + nb[(k2 + 1) % 3];
                if s2 > 0.0 {
                    nb[k2] /= s2;
                    nb[(k2 + 1) % 3] /= s2;
                }
                t = adj.triangle;
                b = nb;
                d = project_to_plane(mesh, t, rot * d).normalize();
                for v in carry.iter_mut() {
                    *v = project_to_plane(mesh, t, rot * *v);
                }
                entry = Some((k2 + 2) % 3);
            }
            _ => {
                for j in 0..3 {
                    b[j] += remaining * db[j];
                }
                return Ok(Walk { end: SurfacePoint::normalized(t, b), direction: d, crossings });
            }
        }
    }
    Err(Error::WalkStuck(MAX_CROSSINGS))
}

/// Discrete exponential map `exp_p(v)`, refusing steps longer than half the
/// mesh diameter.
pub fn walk_exponential<E: Embedding + ?Sized>(mesh: &E, v: &TangentVector, diameter: f64) -> Result<SurfacePoint> {
    let len = v.norm();
    let limit = MAX_STEP_FRACTION * diameter;
    if len > limit {
        return Err(Error::StepTooLong { length: len, limit });
    }
    Ok(walk_straight(mesh, &v.base, &v.vector, len, &mut [])?.end)
}

/// A locally shortest polyline between two surface points.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    /// Start, edge crossings, end.
    pub points: Vec<SurfacePoint>,
    /// Triangles crossed, in order.
    pub corridor: Vec<usize>,
    pub length: f64,
    /// Unit tangent leaving the start (zero for the trivial path).
    pub start_tangent: Vec3,
    /// Unit tangent arriving at the end.
    pub end_tangent: Vec3,
    /// Largest turning angle between consecutive unfolded segments.
    pub max_deviation: f64,
}

impl GeodesicPath {
    pub fn start(&self) -> &SurfacePoint {
        &self.points[0]
    }

    pub fn end(&self) -> &SurfacePoint {
        self.points.last().unwrap()
    }

    pub fn reversed(&self) -> GeodesicPath {
        GeodesicPath {
            points: self.points.iter().rev().cloned().collect(),
            corridor: self.corridor.iter().rev().cloned().collect(),
            length: self.length,
            start_tangent: -self.end_tangent,
            end_tangent: -self.start_tangent,
            max_deviation: self.max_deviation,
        }
    }
}

/// Options for [`minimal_geodesic_with`].
#[derive(Debug, Clone, Copy)]
pub struct GeodesicOptions {
    /// Search for a competing candidate only when the path is at least this
    /// long. `0` always checks, `INFINITY` never does.
    pub ambiguity_min_length: f64,
    /// Relative length gap below which two distinct candidates are a tie.
    pub tie_tolerance: f64,
    /// Start tangents closer than this are the same geodesic.
    pub distinct_angle: f64,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self { ambiguity_min_length: 0.0, tie_tolerance: 1e-6, distinct_angle: 0.05 }
    }
}

/// Corridor triangles laid out isometrically in the plane.
struct Unfolding {
    corners: Vec<[Vec2; 3]>,
}

fn cross2(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

impl Unfolding {
    fn new<E: Embedding + ?Sized>(mesh: &E, corridor: &[usize]) -> Self {
        let topo = mesh.topology();
        let mut corners = Vec::with_capacity(corridor.len());
        let [p0, p1, p2] = mesh.corners(corridor[0]);
        let n = mesh.triangle_normal(corridor[0]);
        let e1 = (p1 - p0).normalize();
        let e2 = n.cross(&e1);
        let to2 = |p: Vec3| Vec2::new((p - p0).dot(&e1), (p - p0).dot(&e2));
        corners.push([Vec2::zeros(), to2(p1), to2(p2)]);
        for w in corridor.windows(2) {
            let (t, t2) = (w[0], w[1]);
            let k = topo.shared_edge(t, t2).expect("corridor triangles are adjacent");
            let prev = corners.last().unwrap();
            let (a2, b2) = (prev[k], prev[(k + 1) % 3]);
            let tri = topo.triangle(t);
            let (va, vb) = (tri[k], tri[(k + 1) % 3]);
            let tri2 = topo.triangle(t2);
            let ia = local_index(&tri2, va).unwrap();
            let ib = local_index(&tri2, vb).unwrap();
            let ic = 3 - ia - ib;
            let (pa, pb, pc) = (mesh.position(va), mesh.position(vb), mesh.position(tri2[ic]));
            let u3 = (pb - pa).normalize();
            let s = (pc - pa).dot(&u3);
            let h = (pc - pa - u3 * s).norm();
            let u2 = (b2 - a2).normalize();
            let right = Vec2::new(u2.y, -u2.x);
            let mut c = [Vec2::zeros(); 3];
            c[ia] = a2;
            c[ib] = b2;
            c[ic] = a2 + u2 * s + right * h;
            corners.push(c);
        }
        Self { corners }
    }

    fn point(&self, i: usize, b: &[f64; 3]) -> Vec2 {
        let c = &self.corners[i];
        c[0] * b[0] + c[1] * b[1] + c[2] * b[2]
    }

    /// Maps a plane vector to the ambient plane of corridor triangle `i`.
    fn to_ambient<E: Embedding + ?Sized>(&self, mesh: &E, t: usize, i: usize, w: Vec2) -> Vec3 {
        let c = &self.corners[i];
        let m = Matrix2::from_columns(&[c[1] - c[0], c[2] - c[0]]);
        let x = m.lu().solve(&w).unwrap_or_else(Vector2::zeros);
        let [p0, p1, p2] = mesh.corners(t);
        (p1 - p0) * x[0] + (p2 - p0) * x[1]
    }

    fn from_ambient<E: Embedding + ?Sized>(&self, mesh: &E, t: usize, i: usize, v: &Vec3) -> Vec2 {
        let db = bary_direction(mesh, t, v);
        let c = &self.corners[i];
        (c[1] - c[0]) * db[1] + (c[2] - c[0]) * db[2]
    }
}

/// Portal endpoints with their vertex ids (`None` for the path ends).
struct Portals {
    left: Vec<(Vec2, Option<usize>)>,
    right: Vec<(Vec2, Option<usize>)>,
}

fn portals<E: Embedding + ?Sized>(mesh: &E, corridor: &[usize], unf: &Unfolding, p2: Vec2, q2: Vec2) -> Portals {
    let topo = mesh.topology();
    let mut left = vec![(p2, None)];
    let mut right = vec![(p2, None)];
    for (i, w) in corridor.windows(2).enumerate() {
        let k = topo.shared_edge(w[0], w[1]).unwrap();
        let tri = topo.triangle(w[0]);
        // Leaving a counter-clockwise triangle across a -> b, b is on the left.
        left.push((unf.corners[i][(k + 1) % 3], Some(tri[(k + 1) % 3])));
        right.push((unf.corners[i][k], Some(tri[k])));
    }
    left.push((q2, None));
    right.push((q2, None));
    Portals { left, right }
}

/// Funnel (string-pulling) pass: returns the taut polyline as plane points
/// and the vertex ids of interior bends.
fn funnel(portals: &Portals, tol: f64) -> Vec<(Vec2, Option<usize>)> {
    let n = portals.left.len();
    let close = |a: Vec2, b: Vec2| (a - b).norm() <= tol;
    let mut path = vec![portals.left[0]];
    let mut apex = portals.left[0].0;
    let (mut left, mut right) = (portals.left[0], portals.right[0]);
    let (mut left_i, mut right_i) = (0usize, 0usize);
    let mut i = 1;
    while i < n {
        let (l, r) = (portals.left[i], portals.right[i]);
        if cross2(right.0 - apex, r.0 - apex) >= 0.0 {
            if close(apex, right.0) || cross2(left.0 - apex, r.0 - apex) < 0.0 {
                right = r;
                right_i = i;
            } else {
                if !close(path.last().unwrap().0, left.0) {
                    path.push(left);
                }
                apex = left.0;
                let apex_i = left_i;
                left = (apex, left.1);
                right = left;
                left_i = apex_i;
                right_i = apex_i;
                i = apex_i + 1;
                continue;
            }
        }
        if cross2(left.0 - apex, l.0 - apex) <= 0.0 {
            if close(apex, left.0) || cross2(right.0 - apex, l.0 - apex) > 0.0 {
                left = l;
                left_i = i;
            } else {
                if !close(path.last().unwrap().0, right.0) {
                    path.push(right);
                }
                apex = right.0;
                let apex_i = right_i;
                right = (apex, right.1);
                left = right;
                left_i = apex_i;
                right_i = apex_i;
                i = apex_i + 1;
                continue;
            }
        }
        i += 1;
    }
    let end = portals.left[n - 1];
    if !close(path.last().unwrap().0, end.0) {
        path.push(end);
    }
    path
}

/// Corridor between two triangles: A* over the dual graph with centroid
/// distances, avoiding `blocked`.
fn corridor_search<E: Embedding + ?Sized>(
    mesh: &E,
    from: usize,
    to: usize,
    target: Vec3,
    blocked: &HashSet<usize>,
) -> Option<Vec<usize>> {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> Ordering {
            o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
        }
    }
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
            Some(self.cmp(o))
        }
    }
    let topo = mesh.topology();
    let nt = topo.n_triangles();
    let centroid = |t: usize| mesh.corners(t).iter().sum::<Vec3>() / 3.0;
    let mut dist = vec![f64::INFINITY; nt];
    let mut prev = vec![usize::MAX; nt];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(Item((centroid(from) - target).norm(), from));
    while let Some(Item(_, t)) = heap.pop() {
        if t == to {
            let mut path = vec![to];
            let mut c = to;
            while c != from {
                c = prev[c];
                path.push(c);
            }
            path.reverse();
            return Some(path);
        }
        let ct = centroid(t);
        for k in 0..3 {
            let n = topo.adjacent(t, k).triangle;
            if blocked.contains(&n) {
                continue;
            }
            let cn = centroid(n);
            let nd = dist[t] + (cn - ct).norm();
            if nd < dist[n] {
                dist[n] = nd;
                prev[n] = t;
                heap.push(Item(nd + (cn - target).norm(), n));
            }
        }
    }
    None
}

fn remove_loops(corridor: &mut Vec<usize>) {
    let mut out: Vec<usize> = Vec::with_capacity(corridor.len());
    for &t in corridor.iter() {
        if let Some(pos) = out.iter().position(|&x| x == t) {
            out.truncate(pos + 1);
        } else {
            out.push(t);
        }
    }
    *corridor = out;
}

/// Replaces the run of corridor triangles around `v` with the other side of
/// its ring. Returns false if no such run exists.
fn flip_around_vertex<E: Embedding + ?Sized>(mesh: &E, corridor: &mut Vec<usize>, v: usize) -> bool {
    let topo = mesh.topology();
    let contains = |t: usize| topo.triangle(t).contains(&v);
    let Some(a) = corridor.iter().position(|&t| contains(t)) else { return false };
    let mut b = a;
    while b + 1 < corridor.len() && contains(corridor[b + 1]) {
        b += 1;
    }
    if b == a {
        return false;
    }
    let ring = topo.ring(v);
    let m = ring.len();
    let pos = |t: usize| ring.iter().position(|&x| x == t).unwrap();
    let (ia, ia1, ib) = (pos(corridor[a]), pos(corridor[a + 1]), pos(corridor[b]));
    let forward = ia1 == (ia + 1) % m;
    let mut arc = vec![corridor[a]];
    let mut i = ia;
    while i != ib {
        i = if forward { (i + m - 1) % m } else { (i + 1) % m };
        arc.push(ring[i]);
    }
    let mut next = corridor[..a].to_vec();
    next.extend(arc);
    next.extend_from_slice(&corridor[b + 1..]);
    *corridor = next;
    remove_loops(corridor);
    true
}

/// Straightens a corridor until the unfolded path has no vertex bends.
fn straighten<E: Embedding + ?Sized>(
    mesh: &E,
    p: &SurfacePoint,
    q: &SurfacePoint,
    mut corridor: Vec<usize>,
) -> GeodesicPath {
    let scale = mesh.corners(p.triangle).iter().map(|c| (c - mesh.corners(p.triangle)[0]).norm()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(1e-300);
    for _ in 0..MAX_STRAIGHTEN_ITERS {
        let unf = Unfolding::new(mesh, &corridor);
        let p2 = unf.point(0, &p.bary);
        let q2 = unf.point(corridor.len() - 1, &q.bary);
        let ports = portals(mesh, &corridor, &unf, p2, q2);
        let path = funnel(&ports, tol);
        let bend = path[1..path.len().saturating_sub(1)].iter().find_map(|(x, v)| {
            let v = (*v)?;
            ((x - p2).norm() > tol && (x - q2).norm() > tol).then_some(v)
        });
        match bend {
            Some(v) if flip_around_vertex(mesh, &mut corridor, v) => continue,
            _ => return build_path(mesh, p, q, &corridor, &unf, &ports, &path),
        }
    }
    let unf = Unfolding::new(mesh, &corridor);
    let p2 = unf.point(0, &p.bary);
    let q2 = unf.point(corridor.len() - 1, &q.bary);
    let ports = portals(mesh, &corridor, &unf, p2, q2);
    let path = funnel(&ports, tol);
    build_path(mesh, p, q, &corridor, &unf, &ports, &path)
}

fn segment_param(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    // Parameter along c -> d where it meets the line a -> b.
    let r = b - a;
    let s = d - c;
    let den = cross2(r, s);
    if den.abs() < 1e-300 {
        return 0.5;
    }
    (cross2(c - a, r) / den).clamp(0.0, 1.0)
}

fn build_path<E: Embedding + ?Sized>(
    mesh: &E,
    p: &SurfacePoint,
    q: &SurfacePoint,
    corridor: &[usize],
    unf: &Unfolding,
    ports: &Portals,
    poly: &[(Vec2, Option<usize>)],
) -> GeodesicPath {
    let topo = mesh.topology();
    let pts: Vec<Vec2> = poly.iter().map(|x| x.0).collect();
    let length: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let mut max_deviation = 0.0f64;
    for w in pts.windows(3) {
        let (u, v) = (w[1] - w[0], w[2] - w[1]);
        max_deviation = max_deviation.max(cross2(u, v).atan2(u.dot(&v)).abs());
    }
    let mut points = vec![*p];
    let mut seg = 0;
    for (i, w) in corridor.windows(2).enumerate() {
        let (r, l) = (ports.right[i + 1].0, ports.left[i + 1].0);
        // Segment of the polyline that crosses this portal.
        while seg + 2 < pts.len() && cross2(r - l, pts[seg + 1] - l) * cross2(r - l, pts[0] - l) > 0.0 {
            seg += 1;
        }
        let s = segment_param(pts[seg], pts[seg + 1], r, l);
        let k = topo.shared_edge(w[0], w[1]).unwrap();
        let mut b = [0.0; 3];
        b[k] = 1.0 - s;
        b[(k + 1) % 3] = s;
        points.push(SurfacePoint::normalized(w[0], b));
    }
    points.push(*q);
    let m = corridor.len() - 1;
    let (start_tangent, end_tangent) = if length > 0.0 {
        let d0 = (pts[1] - pts[0]).normalize();
        let d1 = (pts[pts.len() - 1] - pts[pts.len() - 2]).normalize();
        (
            unf.to_ambient(mesh, corridor[0], 0, d0).normalize(),
            unf.to_ambient(mesh, corridor[m], m, d1).normalize(),
        )
    } else {
        (Vec3::zeros(), Vec3::zeros())
    };
    GeodesicPath { points, corridor: corridor.to_vec(), length, start_tangent, end_tangent, max_deviation }
}

fn trivial_path<E: Embedding + ?Sized>(mesh: &E, p: &SurfacePoint, q: &SurfacePoint) -> GeodesicPath {
    let d = mesh.point_position(q) - mesh.point_position(p);
    let len = d.norm();
    let dir = if len > 0.0 { d / len } else { Vec3::zeros() };
    let q = SurfacePoint::normalized(p.triangle, barycentric_in(mesh, p.triangle, &mesh.point_position(q)));
    GeodesicPath {
        points: vec![*p, q],
        corridor: vec![p.triangle],
        length: len,
        start_tangent: dir,
        end_tangent: dir,
        max_deviation: 0.0,
    }
}

/// Barycentric coordinates of `x` (assumed in the plane) w.r.t. triangle `t`.
pub fn barycentric_in<E: Embedding + ?Sized>(mesh: &E, t: usize, x: &Vec3) -> [f64; 3] {
    let p0 = mesh.corners(t)[0];
    let db = bary_direction(mesh, t, &(x - p0));
    [1.0 + db[0], db[1], db[2]]
}

/// Re-expresses `q` in a triangle that also contains it, if `q` lies on a
/// shared vertex or edge of `t`.
fn same_face<E: Embedding + ?Sized>(mesh: &E, p: &SurfacePoint, q: &SurfacePoint) -> bool {
    if p.triangle == q.triangle {
        return true;
    }
    let topo = mesh.topology();
    let tq = topo.triangle(q.triangle);
    let tp = topo.triangle(p.triangle);
    (0..3).all(|i| q.bary[i] <= 1e-14 || tp.contains(&tq[i]))
}

/// Shortest geodesic between `p` and `q` with default options.
pub fn minimal_geodesic<E: Embedding + ?Sized>(mesh: &E, p: &SurfacePoint, q: &SurfacePoint) -> Result<GeodesicPath> {
    minimal_geodesic_with(mesh, p, q, &GeodesicOptions::default())
}

pub fn minimal_geodesic_with<E: Embedding + ?Sized>(
    mesh: &E,
    p: &SurfacePoint,
    q: &SurfacePoint,
    opts: &GeodesicOptions,
) -> Result<GeodesicPath> {
    if same_face(mesh, p, q) {
        return Ok(trivial_path(mesh, p, q));
    }
    // Search from a canonical end so that d(p, q) == d(q, p) exactly.
    let key = |x: &SurfacePoint| (x.triangle, x.bary.map(f64::to_bits));
    if key(q) < key(p) {
        return minimal_geodesic_with(mesh, q, p, opts).map(|g| g.reversed());
    }
    let target = mesh.point_position(q);
    let seed = corridor_search(mesh, p.triangle, q.triangle, target, &HashSet::new())
        .ok_or_else(|| Error::InvariantFailure("dual graph is disconnected".into()))?;
    let first = straighten(mesh, p, q, seed);
    if first.length < opts.ambiguity_min_length {
        return Ok(first);
    }
    let blocked: HashSet<usize> =
        first.corridor.iter().cloned().filter(|&t| t != p.triangle && t != q.triangle).collect();
    let Some(seed2) = corridor_search(mesh, p.triangle, q.triangle, target, &blocked) else {
        return Ok(first);
    };
    let second = straighten(mesh, p, q, seed2);
    let angle = first.start_tangent.dot(&second.start_tangent).clamp(-1.0, 1.0).acos();
    let gap = (second.length - first.length).abs();
    if angle > opts.distinct_angle && gap <= opts.tie_tolerance * first.length {
        return Err(Error::AmbiguousGeodesic { first: first.length, second: second.length });
    }
    Ok(if second.length < first.length { second } else { first })
}

fn same_point(a: &SurfacePoint, b: &SurfacePoint) -> bool {
    a.triangle == b.triangle && a.bary.iter().zip(&b.bary).all(|(x, y)| (x - y).abs() <= 1e-9)
}

/// Transports `v` along `path` by unfolding the crossed triangles.
pub fn parallel_transport<E: Embedding + ?Sized>(
    mesh: &E,
    path: &GeodesicPath,
    v: &TangentVector,
) -> Result<TangentVector> {
    let start_pos = mesh.point_position(path.start());
    let same = same_point(&v.base, path.start())
        || (v.base.triangle == path.start().triangle
            && (mesh.point_position(&v.base) - start_pos).norm() <= 1e-12 * (1.0 + start_pos.norm()));
    if !same {
        return Err(Error::BaseMismatch);
    }
    let vector = transport_vector(mesh, &path.corridor, &v.vector);
    Ok(TangentVector { base: *path.end(), vector })
}

/// Transport of an ambient tangent vector of the first corridor triangle
/// into the plane of the last one.
pub fn transport_vector<E: Embedding + ?Sized>(mesh: &E, corridor: &[usize], v: &Vec3) -> Vec3 {
    let topo = mesh.topology();
    let mut w = *v;
    for pair in corridor.windows(2) {
        let k = topo.shared_edge(pair[0], pair[1]).expect("adjacent corridor");
        w = hinge_rotation(mesh, pair[0], k, pair[1]) * w;
    }
    let t = *corridor.last().unwrap();
    let projected = project_to_plane(mesh, t, w);
    let n = projected.norm();
    if n > 0.0 {
        projected * (v.norm() / n)
    } else {
        projected
    }
}

/// Unit vectors in the plane of `t`, rotated by `angle` from `reference`.
pub fn rotate_in_plane<E: Embedding + ?Sized>(mesh: &E, t: usize, reference: &Vec3, angle: f64) -> Vec3 {
    let n = mesh.triangle_normal(t);
    let r = reference.normalize();
    r * angle.cos() + n.cross(&r) * angle.sin()
}

#[doc(hidden)]
pub fn unfolded_direction_roundtrip<E: Embedding + ?Sized>(mesh: &E, corridor: &[usize], v: &Vec3) -> Vec3 {
    let unf = Unfolding::new(mesh, corridor);
    let w = unf.from_ambient(mesh, corridor[0], 0, v);
    let m = corridor.len() - 1;
    unf.to_ambient(mesh, corridor[m], m, w)
}
