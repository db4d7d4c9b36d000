//! Parametric B-rep part families written as AP214 STEP files.
//!
//! Each template is a distinct entity-graph topology; within a template
//! the number of repeated sub-structures and every numeric attribute are
//! drawn from a seeded RNG.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, ManifestEntry, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// Row of `k` rectangular blocks.
    BlockChain,
    /// Cylindrical hub with `k` elliptical spokes.
    Wheel,
    /// Headed cylindrical shaft with `k` spline thread faces.
    Screw,
    /// Hexagonal prism with a bore and `k` conical chamfers.
    Nut,
    /// Hub with a spherical nose and `k` spline blades.
    Fan,
    /// `k` straight tube segments joined by toroidal bends.
    Pipe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub template: Template,
    /// Inclusive range of the sub-structure repetition count.
    pub min_repeat: usize,
    pub max_repeat: usize,
}

impl ClassSpec {
    pub fn new(name: &str, template: Template, min_repeat: usize, max_repeat: usize) -> Self {
        Self {
            name: name.to_string(),
            template,
            min_repeat,
            max_repeat,
        }
    }

    /// The six stock part families.
    pub fn defaults() -> Vec<ClassSpec> {
        vec![
            ClassSpec::new("block_chain", Template::BlockChain, 2, 4),
            ClassSpec::new("wheel", Template::Wheel, 3, 6),
            ClassSpec::new("screw", Template::Screw, 2, 6),
            ClassSpec::new("nut", Template::Nut, 1, 3),
            ClassSpec::new("fan", Template::Fan, 3, 7),
            ClassSpec::new("pipe", Template::Pipe, 2, 5),
        ]
    }
}

/// Append-only Part 21 DATA writer; ids are handed out in order.
struct Builder {
    data: String,
    next: u64,
}

fn r(id: u64) -> String {
    format!("#{id}")
}

fn refs(ids: &[u64]) -> String {
    let inner: Vec<String> = ids.iter().map(|&i| r(i)).collect();
    format!("({})", inner.join(","))
}

/// Part 21 real: always carries a decimal point.
fn real(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

fn reals(v: &[f64]) -> String {
    let inner: Vec<String> = v.iter().map(|&x| real(x)).collect();
    format!("({})", inner.join(","))
}

type P3 = [f64; 3];

impl Builder {
    fn new() -> Self {
        Self {
            data: String::new(),
            next: 1,
        }
    }

    fn add(&mut self, body: impl AsRef<str>) -> u64 {
        let id = self.next;
        self.next += 1;
        writeln!(self.data, "#{id}={};", body.as_ref()).unwrap();
        id
    }

    fn point(&mut self, p: P3) -> u64 {
        self.add(format!("CARTESIAN_POINT('',{})", reals(&p)))
    }

    fn direction(&mut self, d: P3) -> u64 {
        self.add(format!("DIRECTION('',{})", reals(&d)))
    }

    fn placement(&mut self, origin: P3, z: P3, x: P3) -> u64 {
        let o = self.point(origin);
        let dz = self.direction(z);
        let dx = self.direction(x);
        self.add(format!("AXIS2_PLACEMENT_3D('',{},{},{})", r(o), r(dz), r(dx)))
    }

    fn vertex(&mut self, p: u64) -> u64 {
        self.add(format!("VERTEX_POINT('',{})", r(p)))
    }

    fn line(&mut self, start: u64, dir: u64, len: f64) -> u64 {
        let v = self.add(format!("VECTOR('',{},{})", r(dir), real(len)));
        self.add(format!("LINE('',{},{})", r(start), r(v)))
    }

    fn edge(&mut self, a: u64, b: u64, curve: u64) -> u64 {
        self.add(format!("EDGE_CURVE('',{},{},{},.T.)", r(a), r(b), r(curve)))
    }

    fn oriented(&mut self, edge: u64, forward: bool) -> u64 {
        let o = if forward { ".T." } else { ".F." };
        self.add(format!("ORIENTED_EDGE('',*,*,{},{o})", r(edge)))
    }

    fn edge_loop(&mut self, edges: &[(u64, bool)]) -> u64 {
        let oes: Vec<u64> = edges.iter().map(|&(e, f)| self.oriented(e, f)).collect();
        self.add(format!("EDGE_LOOP('',{})", refs(&oes)))
    }

    /// Face with one outer loop and any number of holes.
    fn face(&mut self, outer: u64, holes: &[u64], surface: u64) -> u64 {
        let mut bounds = vec![self.add(format!("FACE_OUTER_BOUND('',{},.T.)", r(outer)))];
        for &h in holes {
            bounds.push(self.add(format!("FACE_BOUND('',{},.T.)", r(h))));
        }
        self.add(format!("ADVANCED_FACE('',{},{},.T.)", refs(&bounds), r(surface)))
    }

    fn plane(&mut self, origin: P3, normal: P3) -> u64 {
        let a = self.placement(origin, normal, perpendicular(normal));
        self.add(format!("PLANE('',{})", r(a)))
    }

    fn solid(&mut self, faces: &[u64]) -> u64 {
        let shell = self.add(format!("CLOSED_SHELL('',{})", refs(faces)));
        self.add(format!("MANIFOLD_SOLID_BREP('',{})", r(shell)))
    }

    /// Full circle edge with a single seam vertex.
    fn circle_edge(&mut self, centre: P3, axis: P3, radius: f64) -> (u64, u64) {
        let a = self.placement(centre, axis, perpendicular(axis));
        let c = self.add(format!("CIRCLE('',{},{})", r(a), real(radius)));
        let seam = add(centre, scale(perpendicular(axis), radius));
        let p = self.point(seam);
        let v = self.vertex(p);
        (self.edge(v, v, c), v)
    }

    fn spline_curve(&mut self, rng: &mut ChaCha8Rng, from: P3, to: P3, a: u64, b: u64) -> u64 {
        let mut pts = Vec::with_capacity(4);
        for k in 0..4 {
            let t = k as f64 / 3.0;
            let mut p = lerp(from, to, t);
            if k == 1 || k == 2 {
                p[2] += rng.gen_range(-2.0..2.0);
            }
            pts.push(self.point(p));
        }
        let c = self.add(format!(
            "B_SPLINE_CURVE_WITH_KNOTS('',3,{},.UNSPECIFIED.,.F.,.F.,(4,4),(0.,1.),.UNSPECIFIED.)",
            refs(&pts)
        ));
        self.edge(a, b, c)
    }

    fn spline_surface(&mut self, rng: &mut ChaCha8Rng, corner: P3, span: f64) -> u64 {
        let mut rows = Vec::with_capacity(4);
        for i in 0..4 {
            let mut row = Vec::with_capacity(4);
            for j in 0..4 {
                let p = [
                    corner[0] + span * i as f64 / 3.0,
                    corner[1] + span * j as f64 / 3.0,
                    corner[2] + rng.gen_range(-1.5..1.5),
                ];
                row.push(self.point(p));
            }
            rows.push(refs(&row));
        }
        self.add(format!(
            "B_SPLINE_SURFACE_WITH_KNOTS('',3,3,({}),.UNSPECIFIED.,.F.,.F.,.F.,(4,4),(4,4),(0.,1.),(0.,1.),.UNSPECIFIED.)",
            rows.join(",")
        ))
    }

    fn finish(self, name: &str, build: impl FnOnce(&mut Builder) -> Vec<u64>, styled: bool) -> String {
        let mut b = self;
        let app = b.add("APPLICATION_CONTEXT('core data for automotive mechanical design processes')");
        b.add(format!(
            "APPLICATION_PROTOCOL_DEFINITION('international standard','automotive_design',2000,{})",
            r(app)
        ));
        let pc = b.add(format!("PRODUCT_CONTEXT('',{},'mechanical')", r(app)));
        let prod = b.add(format!("PRODUCT('{name}','{name}','',{})", refs(&[pc])));
        b.add(format!(
            "PRODUCT_RELATED_PRODUCT_CATEGORY('part',$,{})",
            refs(&[prod])
        ));
        let pdf = b.add(format!("PRODUCT_DEFINITION_FORMATION('','',{})", r(prod)));
        let pdc = b.add(format!(
            "PRODUCT_DEFINITION_CONTEXT('part definition',{},'design')",
            r(app)
        ));
        let pd = b.add(format!("PRODUCT_DEFINITION('design','',{},{})", r(pdf), r(pdc)));
        let pds = b.add(format!("PRODUCT_DEFINITION_SHAPE('','',{})", r(pd)));
        let lu = b.add("(LENGTH_UNIT()NAMED_UNIT(*)SI_UNIT(.MILLI.,.METRE.))");
        let au = b.add("(NAMED_UNIT(*)PLANE_ANGLE_UNIT()SI_UNIT($,.RADIAN.))");
        let su = b.add("(NAMED_UNIT(*)SI_UNIT($,.STERADIAN.)SOLID_ANGLE_UNIT())");
        let unc = b.add(format!(
            "UNCERTAINTY_MEASURE_WITH_UNIT(LENGTH_MEASURE(1.E-07),{},'distance_accuracy_value','confusion accuracy')",
            r(lu)
        ));
        let ctx = b.add(format!(
            "(GEOMETRIC_REPRESENTATION_CONTEXT(3)GLOBAL_UNCERTAINTY_ASSIGNED_CONTEXT({})GLOBAL_UNIT_ASSIGNED_CONTEXT({})REPRESENTATION_CONTEXT('Context #1','3D Context with UNIT and UNCERTAINTY'))",
            refs(&[unc]),
            refs(&[lu, au, su])
        ));
        let solids = build(&mut b);
        let origin = b.placement([0.0; 3], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]);
        let mut items = solids.clone();
        items.push(origin);
        let rep = b.add(format!(
            "ADVANCED_BREP_SHAPE_REPRESENTATION('{name}',{},{})",
            refs(&items),
            r(ctx)
        ));
        b.add(format!("SHAPE_DEFINITION_REPRESENTATION({},{})", r(pds), r(rep)));
        if styled {
            let colour = b.add("COLOUR_RGB('',0.6500,0.6500,0.7000)");
            let fill = b.add(format!("FILL_AREA_STYLE_COLOUR('',{})", r(colour)));
            let area = b.add(format!("FILL_AREA_STYLE('',{})", refs(&[fill])));
            let sfa = b.add(format!("SURFACE_STYLE_FILL_AREA({})", r(area)));
            let side = b.add(format!("SURFACE_SIDE_STYLE('',{})", refs(&[sfa])));
            let usage = b.add(format!("SURFACE_STYLE_USAGE(.BOTH.,{})", r(side)));
            let psa = b.add(format!("PRESENTATION_STYLE_ASSIGNMENT({})", refs(&[usage])));
            let styled_items: Vec<u64> = solids
                .iter()
                .map(|&s| b.add(format!("STYLED_ITEM('color',{},{})", refs(&[psa]), r(s))))
                .collect();
            b.add(format!(
                "MECHANICAL_DESIGN_GEOMETRIC_PRESENTATION_REPRESENTATION('',{},{})",
                refs(&styled_items),
                r(ctx)
            ));
        }
        let mut out = String::new();
        out.push_str("ISO-10303-21;\nHEADER;\n");
        out.push_str("FILE_DESCRIPTION(('synthetic part'),'2;1');\n");
        writeln!(
            out,
            "FILE_NAME('{name}.stp','2000-01-01T00:00:00',('stepgraph'),(''),'stepgraph','stepgraph','');"
        )
        .unwrap();
        out.push_str("FILE_SCHEMA(('AUTOMOTIVE_DESIGN { 1 0 10303 214 1 1 1 1 }'));\nENDSEC;\nDATA;\n");
        out.push_str(&b.data);
        out.push_str("ENDSEC;\nEND-ISO-10303-21;\n");
        out
    }
}

fn add(a: P3, b: P3) -> P3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: P3, k: f64) -> P3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

fn lerp(a: P3, b: P3, t: f64) -> P3 {
    add(scale(a, 1.0 - t), scale(b, t))
}

fn perpendicular(n: P3) -> P3 {
    if n[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    }
}

/// Axis-aligned box as a six-face solid.
fn block(b: &mut Builder, origin: P3, size: P3) -> u64 {
    let corner = |i: usize| {
        [
            origin[0] + size[0] * (i & 1) as f64,
            origin[1] + size[1] * ((i >> 1) & 1) as f64,
            origin[2] + size[2] * ((i >> 2) & 1) as f64,
        ]
    };
    let pts: Vec<u64> = (0..8).map(|i| b.point(corner(i))).collect();
    let vs: Vec<u64> = pts.iter().map(|&p| b.vertex(p)).collect();
    let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let dirs: Vec<u64> = axes.iter().map(|&d| b.direction(d)).collect();
    // Edges run from corner i to corner i | bit along each axis.
    let mut edge_of = std::collections::BTreeMap::new();
    for i in 0..8 {
        for (axis, &dir) in dirs.iter().enumerate() {
            let bit = 1 << axis;
            if i & bit == 0 {
                let l = b.line(pts[i], dir, size[axis]);
                edge_of.insert((i, i | bit), b.edge(vs[i], vs[i | bit], l));
            }
        }
    }
    let mut faces = Vec::with_capacity(6);
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let base = side << axis;
            let cyc = [base, base | 1 << u, base | 1 << u | 1 << v, base | 1 << v];
            let mut loop_edges = Vec::with_capacity(4);
            for k in 0..4 {
                let (a, c) = (cyc[k], cyc[(k + 1) % 4]);
                match edge_of.get(&(a, c)) {
                    Some(&e) => loop_edges.push((e, true)),
                    None => loop_edges.push((edge_of[&(c, a)], false)),
                }
            }
            let lp = b.edge_loop(&loop_edges);
            let mut normal = [0.0; 3];
            normal[axis] = if side == 0 { -1.0 } else { 1.0 };
            let s = b.plane(corner(base), normal);
            faces.push(b.face(lp, &[], s));
        }
    }
    b.solid(&faces)
}

/// Side face of a cylinder plus its two rim edges.
fn tube(b: &mut Builder, base: P3, axis: P3, radius: f64, height: f64) -> (u64, u64, u64) {
    let top = add(base, scale(axis, height));
    let (bottom_edge, bv) = b.circle_edge(base, axis, radius);
    let (top_edge, tv) = b.circle_edge(top, axis, radius);
    let seam = seam_edge(b, base, axis, radius, height, bv, tv);
    let lp = b.edge_loop(&[(bottom_edge, true), (seam, true), (top_edge, false), (seam, false)]);
    let a = b.placement(base, axis, perpendicular(axis));
    let s = b.add(format!("CYLINDRICAL_SURFACE('',{},{})", r(a), real(radius)));
    (b.face(lp, &[], s), bottom_edge, top_edge)
}

fn seam_edge(b: &mut Builder, base: P3, axis: P3, offset: f64, height: f64, from: u64, to: u64) -> u64 {
    let dir = b.direction(axis);
    let p = b.point(add(base, scale(perpendicular(axis), offset)));
    let l = b.line(p, dir, height);
    b.edge(from, to, l)
}

/// Elliptical profile swept along `axis`, closed by two planar caps.
fn elliptic_rod(b: &mut Builder, base: P3, axis: P3, semi: (f64, f64), length: f64) -> u64 {
    let mut rims = Vec::with_capacity(2);
    let mut curves = Vec::with_capacity(2);
    for centre in [base, add(base, scale(axis, length))] {
        let a = b.placement(centre, axis, perpendicular(axis));
        let c = b.add(format!("ELLIPSE('',{},{},{})", r(a), real(semi.0), real(semi.1)));
        let p = b.point(add(centre, scale(perpendicular(axis), semi.0)));
        let v = b.vertex(p);
        rims.push((b.edge(v, v, c), v));
        curves.push(c);
    }
    let seam = seam_edge(b, base, axis, semi.0, length, rims[0].1, rims[1].1);
    let lp = b.edge_loop(&[(rims[0].0, true), (seam, true), (rims[1].0, false), (seam, false)]);
    let dir = b.direction(axis);
    let sweep = b.add(format!("VECTOR('',{},{})", r(dir), real(length)));
    let s = b.add(format!(
        "SURFACE_OF_LINEAR_EXTRUSION('',{},{})",
        r(curves[0]),
        r(sweep)
    ));
    let side = b.face(lp, &[], s);
    let start = cap(b, base, scale(axis, -1.0), rims[0].0);
    let end = cap(b, add(base, scale(axis, length)), axis, rims[1].0);
    b.solid(&[side, start, end])
}

fn cap(b: &mut Builder, centre: P3, normal: P3, rim: u64) -> u64 {
    let lp = b.edge_loop(&[(rim, true)]);
    let s = b.plane(centre, normal);
    b.face(lp, &[], s)
}

fn cylinder(b: &mut Builder, base: P3, axis: P3, radius: f64, height: f64) -> Vec<u64> {
    let (side, lo, hi) = tube(b, base, axis, radius, height);
    let bottom = cap(b, base, scale(axis, -1.0), lo);
    let top = cap(b, add(base, scale(axis, height)), axis, hi);
    vec![side, bottom, top]
}

fn block_chain(b: &mut Builder, rng: &mut ChaCha8Rng, k: usize) -> Vec<u64> {
    let mut x = 0.0;
    (0..k)
        .map(|_| {
            let size = [rng.gen_range(5.0..20.0), rng.gen_range(5.0..20.0), rng.gen_range(2.0..10.0)];
            let s = block(b, [x, 0.0, 0.0], size);
            x += size[0];
            s
        })
        .collect()
}

fn wheel(b: &mut Builder, rng: &mut ChaCha8Rng, k: usize) -> Vec<u64> {
    let radius = rng.gen_range(5.0..15.0);
    let height = rng.gen_range(3.0..10.0);
    let hub = cylinder(b, [0.0; 3], [0.0, 0.0, 1.0], radius, height);
    let mut solids = vec![b.solid(&hub)];
    for i in 0..k {
        let angle = std::f64::consts::TAU * i as f64 / k as f64;
        let dir = [angle.cos(), angle.sin(), 0.0];
        let origin = [radius * dir[0], radius * dir[1], height * 0.5];
        let semi = (rng.gen_range(1.0..3.0), rng.gen_range(0.5..1.0));
        solids.push(elliptic_rod(b, origin, dir, semi, rng.gen_range(10.0..30.0)));
    }
    solids
}

fn screw(b: &mut Builder, rng: &mut ChaCha8Rng, k: usize) -> Vec<u64> {
    let z = [0.0, 0.0, 1.0];
    let shaft_r = rng.gen_range(2.0..6.0);
    let length = rng.gen_range(20.0..60.0);
    let mut faces = cylinder(b, [0.0; 3], z, shaft_r, length);
    let head_h = rng.gen_range(2.0..5.0);
    faces.extend(cylinder(b, [0.0, 0.0, length], z, shaft_r * 1.8, head_h));
    let pitch = length / k as f64;
    for i in 0..k {
        let z0 = pitch * i as f64;
        let corners = [
            [shaft_r, 0.0, z0],
            [shaft_r + 1.0, 0.0, z0 + pitch * 0.5],
            [shaft_r, 0.0, z0 + pitch],
        ];
        let vs: Vec<u64> = corners
            .iter()
            .map(|&c| {
                let p = b.point(c);
                b.vertex(p)
            })
            .collect();
        let e0 = b.spline_curve(rng, corners[0], corners[1], vs[0], vs[1]);
        let e1 = b.spline_curve(rng, corners[1], corners[2], vs[1], vs[2]);
        let e2 = b.spline_curve(rng, corners[2], corners[0], vs[2], vs[0]);
        let lp = b.edge_loop(&[(e0, true), (e1, true), (e2, true)]);
        let s = b.spline_surface(rng, corners[0], pitch);
        faces.push(b.face(lp, &[], s));
    }
    vec![b.solid(&faces)]
}

fn nut(b: &mut Builder, rng: &mut ChaCha8Rng, k: usize) -> Vec<u64> {
    let z = [0.0, 0.0, 1.0];
    let across = rng.gen_range(6.0..20.0);
    let height = rng.gen_range(3.0..12.0);
    let bore = across * rng.gen_range(0.3..0.5);
    let hex = |i: usize, h: f64| {
        let a = std::f64::consts::TAU * i as f64 / 6.0;
        [across * a.cos(), across * a.sin(), h]
    };
    let mut rings = Vec::new();
    for h in [0.0, height] {
        let vs: Vec<u64> = (0..6)
            .map(|i| {
                let p = b.point(hex(i, h));
                b.vertex(p)
            })
            .collect();
        rings.push(vs);
    }
    let mut rim = [Vec::new(), Vec::new()];
    let up = b.direction(z);
    let mut verticals = Vec::new();
    for i in 0..6 {
        for (level, h) in [0.0, height].into_iter().enumerate() {
            let (p, q) = (hex(i, h), hex((i + 1) % 6, h));
            let d = b.direction([q[0] - p[0], q[1] - p[1], 0.0]);
            let start = b.point(p);
            let l = b.line(start, d, across);
            rim[level].push(b.edge(rings[level][i], rings[level][(i + 1) % 6], l));
        }
        let start = b.point(hex(i, 0.0));
        let l = b.line(start, up, height);
        verticals.push(b.edge(rings[0][i], rings[1][i], l));
    }
    let mut faces = Vec::new();
    for i in 0..6 {
        let lp = b.edge_loop(&[
            (rim[0][i], true),
            (verticals[(i + 1) % 6], true),
            (rim[1][i], false),
            (verticals[i], false),
        ]);
        let p = hex(i, 0.0);
        let s = b.plane(p, [p[0], p[1], 0.0]);
        faces.push(b.face(lp, &[], s));
    }
    let (hole, lo, hi) = tube(b, [0.0; 3], z, bore, height);
    faces.push(hole);
    for (level, rim_edge) in [(0, lo), (1, hi)] {
        let outer = b.edge_loop(&rim[level].iter().map(|&e| (e, true)).collect::<Vec<_>>());
        let inner = b.edge_loop(&[(rim_edge, false)]);
        let h = if level == 0 { 0.0 } else { height };
        let s = b.plane([0.0, 0.0, h], [0.0, 0.0, if level == 0 { -1.0 } else { 1.0 }]);
        faces.push(b.face(outer, &[inner], s));
    }
    for i in 0..k {
        let h = height * (i as f64 + 0.5) / k as f64;
        let (lower, _) = b.circle_edge([0.0, 0.0, h], z, bore + 0.5);
        let (upper, _) = b.circle_edge([0.0, 0.0, h + 0.5], z, bore);
        let lp = b.edge_loop(&[(lower, true), (upper, false)]);
        let a = b.placement([0.0, 0.0, h], z, [1.0, 0.0, 0.0]);
        let s = b.add(format!(
            "CONICAL_SURFACE('',{},{},{})",
            r(a),
            real(bore),
            real(rng.gen_range(0.5..1.0))
        ));
        faces.push(b.face(lp, &[], s));
    }
    vec![b.solid(&faces)]
}

fn fan(b: &mut Builder, rng: &mut ChaCha8Rng, k: usize) -> Vec<u64> {
    let z = [0.0, 0.0, 1.0];
    let hub_r = rng.gen_range(3.0..8.0);
    let hub_h = rng.gen_range(4.0..10.0);
    let (side, lo, hi) = tube(b, [0.0; 3], z, hub_r, hub_h);
    let mut faces = vec![side, cap(b, [0.0; 3], [0.0, 0.0, -1.0], lo)];
    let lp = b.edge_loop(&[(hi, true)]);
    let a = b.placement([0.0, 0.0, hub_h], z, [1.0, 0.0, 0.0]);
    let nose = b.add(format!("SPHERICAL_SURFACE('',{},{})", r(a), real(hub_r)));
    faces.push(b.face(lp, &[], nose));
    let mut solids = vec![b.solid(&faces)];
    for i in 0..k {
        let angle = std::f64::consts::TAU * i as f64 / k as f64;
        let span = rng.gen_range(10.0..25.0);
        let root = [hub_r * angle.cos(), hub_r * angle.sin(), hub_h * 0.5];
        let tip = add(root, [span * angle.cos(), span * angle.sin(), 0.0]);
        let corners = [root, tip, add(tip, [0.0, 0.0, 2.0]), add(root, [0.0, 0.0, 2.0])];
        let vs: Vec<u64> = corners
            .iter()
            .map(|&c| {
                let p = b.point(c);
                b.vertex(p)
            })
            .collect();
        let mut loop_edges = Vec::with_capacity(4);
        for j in 0..4 {
            let e = b.spline_curve(rng, corners[j], corners[(j + 1) % 4], vs[j], vs[(j + 1) % 4]);
            loop_edges.push((e, true));
        }
        let front_loop = b.edge_loop(&loop_edges);
        let front = b.spline_surface(rng, root, span);
        let back_loop = b.edge_loop(&loop_edges.iter().rev().map(|&(e, _)| (e, false)).collect::<Vec<_>>());
        let back = b.spline_surface(rng, add(root, [0.0, 0.0, 0.5]), span);
        let blade = [b.face(front_loop, &[], front), b.face(back_loop, &[], back)];
        solids.push(b.solid(&blade));
    }
    solids
}

fn pipe(b: &mut Builder, rng: &mut ChaCha8Rng, k: usize) -> Vec<u64> {
    let radius = rng.gen_range(1.0..4.0);
    let bend = radius * rng.gen_range(2.0..4.0);
    let mut faces = Vec::new();
    let mut base = [0.0; 3];
    let mut axis = [0.0, 0.0, 1.0];
    let mut previous_rim: Option<u64> = None;
    for i in 0..k {
        let length = rng.gen_range(10.0..40.0);
        let (side, lo, hi) = tube(b, base, axis, radius, length);
        faces.push(side);
        match previous_rim {
            None => faces.push(cap(b, base, scale(axis, -1.0), lo)),
            Some(rim) => {
                // Toroidal elbow between the previous segment and this one.
                let lp = b.edge_loop(&[(rim, true), (lo, false)]);
                let a = b.placement(base, axis, perpendicular(axis));
                let s = b.add(format!(
                    "TOROIDAL_SURFACE('',{},{},{})",
                    r(a),
                    real(bend),
                    real(radius)
                ));
                faces.push(b.face(lp, &[], s));
            }
        }
        base = add(base, scale(axis, length + bend));
        if i + 1 == k {
            faces.push(cap(b, base, axis, hi));
        }
        axis = if i % 2 == 0 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
        previous_rim = Some(hi);
    }
    vec![b.solid(&faces)]
}

impl Template {
    /// Serialize one part with `k` repeated sub-structures.
    pub fn render(self, name: &str, k: usize, rng: &mut ChaCha8Rng) -> String {
        let styled = rng.gen_bool(0.5);
        let mut inner = ChaCha8Rng::seed_from_u64(rng.gen());
        Builder::new().finish(
            name,
            |b| match self {
                Template::BlockChain => block_chain(b, &mut inner, k),
                Template::Wheel => wheel(b, &mut inner, k),
                Template::Screw => screw(b, &mut inner, k),
                Template::Nut => nut(b, &mut inner, k),
                Template::Fan => fan(b, &mut inner, k),
                Template::Pipe => pipe(b, &mut inner, k),
            },
            styled,
        )
    }
}

/// Write `count_per_class` STEP files per class under `root/<class name>/`
/// and return (and save as `root/manifest.json`) the matching manifest.
pub fn generate_synthetic_corpus(
    specs: &[ClassSpec],
    count_per_class: usize,
    seed: u64,
    root: &Path,
) -> Result<DatasetManifest, PipelineError> {
    if specs.len() < 2 {
        return Err(PipelineError::CorpusSpec("at least two classes are needed".into()));
    }
    if count_per_class == 0 {
        return Err(PipelineError::CorpusSpec("count per class must be positive".into()));
    }
    for s in specs {
        if s.min_repeat == 0 || s.min_repeat > s.max_repeat {
            return Err(PipelineError::CorpusSpec(format!(
                "class '{}': repeat range {}..={} is invalid",
                s.name, s.min_repeat, s.max_repeat
            )));
        }
        if s.name.is_empty() || s.name.contains(['/', '\\', '\'']) {
            return Err(PipelineError::CorpusSpec(format!("class name '{}' is not usable as a directory", s.name)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(specs.len() * count_per_class);
    for (class_id, spec) in specs.iter().enumerate() {
        let dir = root.join(&spec.name);
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        for i in 0..count_per_class {
            let name = format!("{}_{i:03}", spec.name);
            let k = rng.gen_range(spec.min_repeat..=spec.max_repeat);
            let text = spec.template.render(&name, k, &mut rng);
            let rel = format!("{}/{name}.stp", spec.name);
            let path = root.join(&rel);
            std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))?;
            entries.push(ManifestEntry {
                path: rel,
                class_id,
                class_name: spec.name.clone(),
                split: None,
            });
        }
    }
    let manifest = DatasetManifest {
        schema: "AP214".into(),
        classes: specs.iter().map(|s| s.name.clone()).collect(),
        entries,
    };
    manifest.save(root.join("manifest.json"))?;
    Ok(manifest)
}
