//! Versioned TOML scene description: parsing, validation, serialization, and
//! conversion to the runtime `Scene`. Mesh geometry is referenced by path and
//! loaded from binary STL (triangle soup).

use crate::medium::SPEED_OF_LIGHT;
use crate::scene::{Camera, Emitter, Material, Primitive, Scene};
use crate::{DartsError, Medium, Vec3};
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

pub const SCENE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    pub version: u32,
    pub medium: MediumDesc,
    pub camera: CameraDesc,
    pub emitters: Vec<EmitterDesc>,
    pub materials: Vec<MaterialDesc>,
    pub geometry: Vec<GeometryDesc>,
    #[serde(default)]
    pub gate: Option<GateDesc>,
}

/// Units: cross sections in 1/m, speed in m/s.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MediumDesc {
    pub sigma_s: f64,
    pub sigma_a: f64,
    pub g: f64,
    #[serde(default = "one")]
    pub eta: f64,
    /// Vacuum light speed override; lets test scenes use c = 1.
    #[serde(default)]
    pub c: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CameraDesc {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    #[serde(default = "up_y")]
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

fn up_y() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EmitterDesc {
    pub position: [f64; 3],
    pub intensity: [f64; 3],
    /// Pulse emission time in seconds.
    #[serde(default)]
    pub emission_start: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialDesc {
    Lambert { name: String, albedo: [f64; 3] },
    Mirror { name: String, albedo: [f64; 3] },
    Glossy { name: String, albedo: [f64; 3], exponent: f64 },
}

impl MaterialDesc {
    pub fn name(&self) -> &str {
        match self {
            MaterialDesc::Lambert { name, .. }
            | MaterialDesc::Mirror { name, .. }
            | MaterialDesc::Glossy { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryDesc {
    Sphere { center: [f64; 3], radius: f64, material: String },
    Quad { origin: [f64; 3], edge_u: [f64; 3], edge_v: [f64; 3], material: String },
    /// Binary STL file, path relative to the scene file.
    Mesh { file: String, material: String },
}

/// Default sensor gate in seconds.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GateDesc {
    pub start: f64,
    pub width: f64,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl SceneDescription {
    pub fn parse(text: &str) -> Result<SceneDescription, DartsError> {
        let desc: SceneDescription =
            toml::from_str(text).map_err(|e| DartsError::Scene(format!("scene parse: {e}")))?;
        desc.validate()?;
        Ok(desc)
    }

    pub fn serialize(&self) -> String {
        toml::to_string_pretty(self).expect("scene description serializes")
    }

    pub fn validate(&self) -> Result<(), DartsError> {
        if self.version != SCENE_FORMAT_VERSION {
            return Err(DartsError::Scene(format!(
                "unsupported scene version {} (expected {SCENE_FORMAT_VERSION})",
                self.version
            )));
        }
        // establishes the Medium invariants early so errors carry context
        self.medium.build()?;
        if self.emitters.is_empty() {
            return Err(DartsError::Scene("scene needs at least one emitter".into()));
        }
        if self.camera.width == 0 || self.camera.height == 0 {
            return Err(DartsError::Scene("camera resolution must be positive".into()));
        }
        if !(self.camera.fov_y > 0.0 && self.camera.fov_y < 180.0) {
            return Err(DartsError::Scene(format!(
                "fov_y must be in (0, 180), got {}",
                self.camera.fov_y
            )));
        }
        if let Some(gate) = &self.gate {
            if !(gate.width > 0.0) {
                return Err(DartsError::Scene(format!(
                    "gate width must be positive, got {}",
                    gate.width
                )));
            }
        }
        let mut names: Vec<&str> = self.materials.iter().map(|m| m.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(DartsError::Scene("duplicate material name".into()));
        }
        for g in &self.geometry {
            let mat = match g {
                GeometryDesc::Sphere { material, .. }
                | GeometryDesc::Quad { material, .. }
                | GeometryDesc::Mesh { material, .. } => material,
            };
            if !self.materials.iter().any(|m| m.name() == mat) {
                return Err(DartsError::Scene(format!("geometry references unknown material {mat:?}")));
            }
            if let GeometryDesc::Sphere { radius, .. } = g {
                if !(*radius > 0.0) {
                    return Err(DartsError::Scene(format!("sphere radius must be > 0, got {radius}")));
                }
            }
        }
        Ok(())
    }

    /// Builds the runtime scene; `base_dir` resolves relative mesh paths.
    pub fn build(&self, base_dir: &Path) -> Result<Scene, DartsError> {
        self.validate()?;
        let medium = self.medium.build()?;
        let materials: Vec<Material> = self
            .materials
            .iter()
            .map(|m| match m {
                MaterialDesc::Lambert { albedo, .. } => Material::Lambert { albedo: v3(*albedo) },
                MaterialDesc::Mirror { albedo, .. } => Material::Mirror { albedo: v3(*albedo) },
                MaterialDesc::Glossy { albedo, exponent, .. } => {
                    Material::Glossy { albedo: v3(*albedo), exponent: *exponent }
                }
            })
            .collect();
        let mat_index = |name: &str| self.materials.iter().position(|m| m.name() == name).unwrap();
        let mut primitives = Vec::new();
        for g in &self.geometry {
            match g {
                GeometryDesc::Sphere { center, radius, material } => primitives.push(
                    Primitive::Sphere {
                        center: v3(*center),
                        radius: *radius,
                        material: mat_index(material),
                    },
                ),
                GeometryDesc::Quad { origin, edge_u, edge_v, material } => primitives.push(
                    Primitive::Quad {
                        origin: v3(*origin),
                        edge_u: v3(*edge_u),
                        edge_v: v3(*edge_v),
                        material: mat_index(material),
                    },
                ),
                GeometryDesc::Mesh { file, material } => {
                    let path = base_dir.join(file);
                    let triangles = load_stl(&path)?;
                    let mi = mat_index(material);
                    for [a, b, c] in triangles {
                        primitives.push(Primitive::Triangle { a, b, c, material: mi });
                    }
                }
            }
        }
        let emitters = self
            .emitters
            .iter()
            .map(|e| Emitter {
                position: v3(e.position),
                intensity: v3(e.intensity),
                emission_start: e.emission_start,
            })
            .collect();
        let camera = Camera {
            position: v3(self.camera.position),
            look_at: v3(self.camera.look_at),
            up: v3(self.camera.up).normalized(),
            fov_y: self.camera.fov_y,
            width: self.camera.width,
            height: self.camera.height,
        };
        Ok(Scene::new(primitives, materials, emitters, medium, camera))
    }
}

impl MediumDesc {
    pub fn build(&self) -> Result<Medium, DartsError> {
        Medium::new(self.sigma_s, self.sigma_a, self.g, self.eta, self.c.unwrap_or(SPEED_OF_LIGHT))
    }
}

pub fn load_scene(path: &Path) -> Result<(SceneDescription, Scene), DartsError> {
    let text = std::fs::read_to_string(path)?;
    let desc = SceneDescription::parse(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scene = desc.build(base)?;
    Ok((desc, scene))
}

/// Binary STL triangle soup. Normals in the file are ignored; orientation
/// comes from the vertex winding.
pub fn load_stl(path: &Path) -> Result<Vec<[Vec3; 3]>, DartsError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 80];
    f.read_exact(&mut header)?;
    let mut count_buf = [0u8; 4];
    f.read_exact(&mut count_buf)?;
    let count = u32::from_le_bytes(count_buf) as usize;
    let mut triangles = Vec::with_capacity(count);
    let mut rec = [0u8; 50];
    for _ in 0..count {
        f.read_exact(&mut rec)?;
        let mut verts = [Vec3::ZERO; 3];
        for (vi, vert) in verts.iter_mut().enumerate() {
            let base = 12 + vi * 12;
            let x = f32::from_le_bytes(rec[base..base + 4].try_into().unwrap()) as f64;
            let y = f32::from_le_bytes(rec[base + 4..base + 8].try_into().unwrap()) as f64;
            let z = f32::from_le_bytes(rec[base + 8..base + 12].try_into().unwrap()) as f64;
            *vert = Vec3::new(x, y, z);
        }
        triangles.push(verts);
    }
    Ok(triangles)
}

/// Writes triangles as binary STL; used by tests and the Python bindings.
pub fn write_stl(triangles: &[[Vec3; 3]], path: &Path) -> Result<(), DartsError> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&[0u8; 80])?;
    f.write_all(&(triangles.len() as u32).to_le_bytes())?;
    for tri in triangles {
        let e1 = tri[1] - tri[0];
        let e2 = tri[2] - tri[0];
        let n = e1.cross(e2).normalized();
        for v in [n, tri[0], tri[1], tri[2]] {
            f.write_all(&(v.x as f32).to_le_bytes())?;
            f.write_all(&(v.y as f32).to_le_bytes())?;
            f.write_all(&(v.z as f32).to_le_bytes())?;
        }
        f.write_all(&[0u8; 2])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1

[medium]
sigma_s = 2.0
sigma_a = 0.2
g = 0.0
c = 1.0

[camera]
position = [0.0, 0.0, -3.0]
look_at = [0.0, 0.0, 0.0]
fov_y = 45.0
width = 8
height = 8

[[emitters]]
position = [0.0, 1.0, 0.0]
intensity = [1.0, 1.0, 1.0]

[[materials]]
type = "lambert"
name = "white"
albedo = [0.7, 0.7, 0.7]

[[geometry]]
type = "sphere"
center = [0.0, 0.0, 0.0]
radius = 1.0
material = "white"
"#;

    #[test]
    fn minimal_scene_parses_and_builds() {
        let desc = SceneDescription::parse(MINIMAL).unwrap();
        assert_eq!(desc.version, 1);
        assert_eq!(desc.medium.eta, 1.0);
        let scene = desc.build(Path::new(".")).unwrap();
        assert_eq!(scene.emitters.len(), 1);
        assert!((scene.medium.sigma_t - 2.2).abs() < 1e-12);
    }

    #[test]
    fn invalid_anisotropy_rejected() {
        let text = MINIMAL.replace("g = 0.0", "g = 1.5");
        let err = SceneDescription::parse(&text).unwrap_err();
        assert!(err.to_string().contains("g must be in (-1, 1)"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let text = MINIMAL.replace("sigma_s = 2.0", "sigma_s = 2.0\nbogus = 1");
        assert!(SceneDescription::parse(&text).is_err());
    }

    #[test]
    fn missing_emitter_rejected() {
        let text = MINIMAL.replace("[[emitters]]", "[[__dropped]]");
        assert!(SceneDescription::parse(&text).is_err());
    }

    #[test]
    fn non_positive_gate_width_rejected() {
        let text = format!("{MINIMAL}\n[gate]\nstart = 1.0\nwidth = 0.0\n");
        let err = SceneDescription::parse(&text).unwrap_err();
        assert!(err.to_string().contains("gate width"), "{err}");
    }

    #[test]
    fn unknown_material_reference_rejected() {
        let text = MINIMAL.replace("material = \"white\"", "material = \"missing\"");
        assert!(SceneDescription::parse(&text).is_err());
    }

    #[test]
    fn round_trip_identical() {
        let desc = SceneDescription::parse(MINIMAL).unwrap();
        let text = desc.serialize();
        let back = SceneDescription::parse(&text).unwrap();
        assert_eq!(desc, back);
    }

    #[test]
    fn stl_round_trip_and_mesh_build() {
        let tris = vec![
            [Vec3::new(0.0, 0.0, 2.0), Vec3::new(1.0, 0.0, 2.0), Vec3::new(0.0, 1.0, 2.0)],
            [Vec3::new(0.0, 0.0, 3.0), Vec3::new(1.0, 0.0, 3.0), Vec3::new(0.0, 1.0, 3.0)],
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.stl");
        write_stl(&tris, &path).unwrap();
        let back = load_stl(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in tris.iter().zip(&back) {
            for (va, vb) in a.iter().zip(b) {
                assert!((*va - *vb).length() < 1e-6);
            }
        }
        let text = format!(
            "{MINIMAL}\n[[geometry]]\ntype = \"mesh\"\nfile = \"m.stl\"\nmaterial = \"white\"\n"
        );
        let desc = SceneDescription::parse(&text).unwrap();
        let scene = desc.build(dir.path()).unwrap();
        use crate::scene::Ray;
        // starts past the sphere so the first hit is the z = 2 triangle
        let hit = scene
            .intersect(&Ray::new(Vec3::new(0.2, 0.2, 1.5), Vec3::new(0.0, 0.0, 1.0)))
            .unwrap();
        assert!((hit.distance - 0.5).abs() < 1e-9);
    }
}
