//! Scene geometry: spheres, quads, triangle meshes behind a simple BVH,
//! materials, emitters and the pinhole camera.

use crate::math::{Frame, Point3, Vec3};
use crate::medium::Medium;

const RAY_EPS: f64 = 1e-7;
const SHADOW_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Point3,
    pub direction: Vec3,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Point3, direction: Vec3) -> Ray {
        debug_assert!(direction.is_unit());
        Ray { origin, direction, t_max: f64::INFINITY }
    }

    pub fn at(&self, t: f64) -> Point3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub distance: f64,
    pub position: Point3,
    /// Geometric normal, flipped to face the incoming ray.
    pub normal: Vec3,
    pub material: usize,
}

pub type Rgb = Vec3;

#[derive(Debug, Clone)]
pub enum Material {
    Lambert { albedo: Rgb },
    /// Perfect specular reflector.
    Mirror { albedo: Rgb },
    /// Normalized Phong lobe around the mirror direction.
    Glossy { albedo: Rgb, exponent: f64 },
}

pub struct BsdfSample {
    pub direction: Vec3,
    /// f * |cos| / pdf, or the reflectance for delta lobes.
    pub weight: Rgb,
    /// Solid-angle pdf; 0 for delta lobes.
    pub pdf: f64,
    pub delta: bool,
}

impl Material {
    /// BSDF value for the given propagation directions (`incoming` travels
    /// into the surface, `outgoing` away from it). Delta lobes return zero.
    pub fn eval(&self, incoming: Vec3, outgoing: Vec3, normal: Vec3) -> Rgb {
        match self {
            Material::Lambert { albedo } => {
                if incoming.dot(normal) < 0.0 && outgoing.dot(normal) > 0.0 {
                    *albedo / std::f64::consts::PI
                } else {
                    Rgb::ZERO
                }
            }
            Material::Mirror { .. } => Rgb::ZERO,
            Material::Glossy { albedo, exponent } => {
                if incoming.dot(normal) >= 0.0 || outgoing.dot(normal) <= 0.0 {
                    return Rgb::ZERO;
                }
                let r = reflect(incoming, normal);
                let c = r.dot(outgoing).max(0.0);
                *albedo * ((exponent + 2.0) / (2.0 * std::f64::consts::PI) * c.powf(*exponent))
            }
        }
    }

    pub fn sample(&self, incoming: Vec3, normal: Vec3, u1: f64, u2: f64) -> Option<BsdfSample> {
        match self {
            Material::Lambert { albedo } => {
                // cosine-weighted hemisphere
                let frame = Frame::from_w(normal);
                let phi = 2.0 * std::f64::consts::PI * u2;
                let cos_theta = u1.sqrt();
                let dir = frame.direction(cos_theta, phi);
                let pdf = cos_theta / std::f64::consts::PI;
                Some(BsdfSample { direction: dir, weight: *albedo, pdf, delta: false })
            }
            Material::Mirror { albedo } => {
                let dir = reflect(incoming, normal);
                Some(BsdfSample { direction: dir, weight: *albedo, pdf: 0.0, delta: true })
            }
            Material::Glossy { albedo: _, exponent } => {
                let r = reflect(incoming, normal);
                let frame = Frame::from_w(r);
                let cos_r = u1.powf(1.0 / (exponent + 1.0));
                let phi = 2.0 * std::f64::consts::PI * u2;
                let dir = frame.direction(cos_r, phi);
                if dir.dot(normal) <= 0.0 {
                    return None; // sampled below the surface
                }
                let pdf = (exponent + 1.0) / (2.0 * std::f64::consts::PI) * cos_r.powf(*exponent);
                let f = self.eval(incoming, dir, normal);
                let weight = f * (dir.dot(normal) / pdf);
                Some(BsdfSample { direction: dir, weight, pdf, delta: false })
            }
        }
    }

    /// Solid-angle pdf of `sample` for non-delta lobes.
    pub fn pdf(&self, incoming: Vec3, outgoing: Vec3, normal: Vec3) -> f64 {
        match self {
            Material::Lambert { .. } => {
                let c = outgoing.dot(normal);
                if incoming.dot(normal) < 0.0 && c > 0.0 {
                    c / std::f64::consts::PI
                } else {
                    0.0
                }
            }
            Material::Mirror { .. } => 0.0,
            Material::Glossy { exponent, .. } => {
                if incoming.dot(normal) >= 0.0 || outgoing.dot(normal) <= 0.0 {
                    return 0.0;
                }
                let r = reflect(incoming, normal);
                let c = r.dot(outgoing).max(0.0);
                (exponent + 1.0) / (2.0 * std::f64::consts::PI) * c.powf(*exponent)
            }
        }
    }
}

pub fn reflect(incoming: Vec3, normal: Vec3) -> Vec3 {
    incoming - normal * (2.0 * incoming.dot(normal))
}

/// Pulsed point emitter.
#[derive(Debug, Clone, Copy)]
pub struct Emitter {
    pub position: Point3,
    pub intensity: Rgb,
    /// Start time of the delta pulse.
    pub emission_start: f64,
}

#[derive(Debug, Clone)]
pub struct Camera {
    pub position: Point3,
    pub look_at: Point3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Primary ray through film coordinates (sx, sy) in [0, 1)^2 of the pixel.
    pub fn primary_ray(&self, px: usize, py: usize, sx: f64, sy: f64) -> Ray {
        let forward = (self.look_at - self.position).normalized();
        let right = forward.cross(self.up).normalized();
        let up = right.cross(forward);
        let tan_half = (self.fov_y.to_radians() / 2.0).tan();
        let aspect = self.width as f64 / self.height as f64;
        let ndc_x = ((px as f64 + sx) / self.width as f64) * 2.0 - 1.0;
        let ndc_y = 1.0 - ((py as f64 + sy) / self.height as f64) * 2.0;
        let dir = forward + right * (ndc_x * tan_half * aspect) + up * (ndc_y * tan_half);
        Ray::new(self.position, dir.normalized())
    }
}

#[derive(Debug, Clone)]
pub enum Primitive {
    Sphere { center: Point3, radius: f64, material: usize },
    /// Parallelogram spanned by two edges from `origin`.
    Quad { origin: Point3, edge_u: Vec3, edge_v: Vec3, material: usize },
    Triangle { a: Point3, b: Point3, c: Point3, material: usize },
}

impl Primitive {
    fn bounds(&self) -> (Point3, Point3) {
        match self {
            Primitive::Sphere { center, radius, .. } => {
                (*center - Vec3::splat(*radius), *center + Vec3::splat(*radius))
            }
            Primitive::Quad { origin, edge_u, edge_v, .. } => {
                let corners = [*origin, *origin + *edge_u, *origin + *edge_v, *origin + *edge_u + *edge_v];
                bounds_of(&corners)
            }
            Primitive::Triangle { a, b, c, .. } => bounds_of(&[*a, *b, *c]),
        }
    }

    fn intersect(&self, ray: &Ray) -> Option<Hit> {
        match self {
            Primitive::Sphere { center, radius, material } => {
                let oc = ray.origin - *center;
                let b = oc.dot(ray.direction);
                let c = oc.length_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let mut t = -b - sq;
                if t <= RAY_EPS {
                    t = -b + sq;
                }
                if t <= RAY_EPS || t >= ray.t_max {
                    return None;
                }
                let position = ray.at(t);
                let mut normal = (position - *center) / *radius;
                if normal.dot(ray.direction) > 0.0 {
                    normal = -normal;
                }
                Some(Hit { distance: t, position, normal, material: *material })
            }
            Primitive::Quad { origin, edge_u, edge_v, material } => {
                let n = edge_u.cross(*edge_v);
                let denom = n.dot(ray.direction);
                if denom.abs() < 1e-14 {
                    return None;
                }
                let t = n.dot(*origin - ray.origin) / denom;
                if t <= RAY_EPS || t >= ray.t_max {
                    return None;
                }
                let p = ray.at(t);
                let d = p - *origin;
                let uu = edge_u.dot(*edge_u);
                let vv = edge_v.dot(*edge_v);
                let uv = edge_u.dot(*edge_v);
                let du = d.dot(*edge_u);
                let dv = d.dot(*edge_v);
                let det = uu * vv - uv * uv;
                let alpha = (du * vv - dv * uv) / det;
                let beta = (dv * uu - du * uv) / det;
                if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
                    return None;
                }
                let mut normal = n.normalized();
                if normal.dot(ray.direction) > 0.0 {
                    normal = -normal;
                }
                Some(Hit { distance: t, position: p, normal, material: *material })
            }
            Primitive::Triangle { a, b, c, material } => {
                // Moller-Trumbore
                let e1 = *b - *a;
                let e2 = *c - *a;
                let pvec = ray.direction.cross(e2);
                let det = e1.dot(pvec);
                if det.abs() < 1e-14 {
                    return None;
                }
                let inv = 1.0 / det;
                let tvec = ray.origin - *a;
                let u = tvec.dot(pvec) * inv;
                if !(0.0..=1.0).contains(&u) {
                    return None;
                }
                let qvec = tvec.cross(e1);
                let v = ray.direction.dot(qvec) * inv;
                if v < 0.0 || u + v > 1.0 {
                    return None;
                }
                let t = e2.dot(qvec) * inv;
                if t <= RAY_EPS || t >= ray.t_max {
                    return None;
                }
                let mut normal = e1.cross(e2).normalized();
                if normal.dot(ray.direction) > 0.0 {
                    normal = -normal;
                }
                Some(Hit { distance: t, position: ray.at(t), normal, material: *material })
            }
        }
    }
}

fn bounds_of(points: &[Point3]) -> (Point3, Point3) {
    let mut lo = Vec3::splat(f64::INFINITY);
    let mut hi = Vec3::splat(f64::NEG_INFINITY);
    for p in points {
        lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    (lo, hi)
}

struct BvhNode {
    lo: Point3,
    hi: Point3,
    /// Leaf: (first, count) into the ordered primitive list; inner: children.
    content: NodeContent,
}

enum NodeContent {
    Leaf { first: usize, count: usize },
    Inner { left: usize, right: usize },
}

pub struct Scene {
    primitives: Vec<Primitive>,
    nodes: Vec<BvhNode>,
    pub materials: Vec<Material>,
    pub emitters: Vec<Emitter>,
    pub medium: Medium,
    pub camera: Camera,
}

impl Scene {
    pub fn new(
        primitives: Vec<Primitive>,
        materials: Vec<Material>,
        emitters: Vec<Emitter>,
        medium: Medium,
        camera: Camera,
    ) -> Scene {
        let mut scene = Scene { primitives, nodes: Vec::new(), materials, emitters, medium, camera };
        scene.build_bvh();
        scene
    }

    fn build_bvh(&mut self) {
        self.nodes.clear();
        if self.primitives.is_empty() {
            return;
        }
        let mut order: Vec<usize> = (0..self.primitives.len()).collect();
        let prims = std::mem::take(&mut self.primitives);
        self.build_node(&prims, &mut order, 0, prims.len());
        self.primitives = order.iter().map(|&i| prims[i].clone()).collect();
    }

    fn build_node(&mut self, prims: &[Primitive], order: &mut [usize], first: usize, count: usize) -> usize {
        let slice = &order[first..first + count];
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for &i in slice.iter() {
            let (blo, bhi) = prims[i].bounds();
            lo = Vec3::new(lo.x.min(blo.x), lo.y.min(blo.y), lo.z.min(blo.z));
            hi = Vec3::new(hi.x.max(bhi.x), hi.y.max(bhi.y), hi.z.max(bhi.z));
        }
        let idx = self.nodes.len();
        self.nodes.push(BvhNode { lo, hi, content: NodeContent::Leaf { first, count } });
        if count <= 4 {
            return idx;
        }
        // split along the widest axis at the centroid median
        let extent = hi - lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let centroid = |i: usize| {
            let (blo, bhi) = prims[i].bounds();
            let c = (blo + bhi) * 0.5;
            match axis {
                0 => c.x,
                1 => c.y,
                _ => c.z,
            }
        };
        let mid = count / 2;
        order[first..first + count]
            .select_nth_unstable_by(mid, |&a, &b| centroid(a).partial_cmp(&centroid(b)).unwrap());
        let left = self.build_node(prims, order, first, mid);
        let right = self.build_node(prims, order, first + mid, count - mid);
        self.nodes[idx].content = NodeContent::Inner { left, right };
        idx
    }

    fn slab_test(node: &BvhNode, ray: &Ray, inv_dir: Vec3, t_best: f64) -> bool {
        let mut t0: f64 = 0.0;
        let mut t1 = t_best;
        for axis in 0..3 {
            let (o, lo, hi, inv) = match axis {
                0 => (ray.origin.x, node.lo.x, node.hi.x, inv_dir.x),
                1 => (ray.origin.y, node.lo.y, node.hi.y, inv_dir.y),
                _ => (ray.origin.z, node.lo.z, node.hi.z, inv_dir.z),
            };
            let mut near = (lo - o) * inv;
            let mut far = (hi - o) * inv;
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return false;
            }
        }
        true
    }

    /// Nearest intersection with distance < ray.t_max.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        let mut limited = *ray;
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !Self::slab_test(node, ray, inv_dir, limited.t_max) {
                continue;
            }
            match node.content {
                NodeContent::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
                NodeContent::Leaf { first, count } => {
                    for prim in &self.primitives[first..first + count] {
                        if let Some(hit) = prim.intersect(&limited) {
                            limited.t_max = hit.distance;
                            best = Some(hit);
                        }
                    }
                }
            }
        }
        best
    }

    /// True when the open segment between `a` and `b` is blocked by geometry.
    pub fn occluded(&self, a: Point3, b: Point3) -> bool {
        let delta = b - a;
        let dist = delta.length();
        if dist < SHADOW_EPS {
            return false;
        }
        let mut ray = Ray::new(a, delta / dist);
        ray.t_max = dist * (1.0 - SHADOW_EPS);
        self.intersect(&ray).is_some()
    }
}
