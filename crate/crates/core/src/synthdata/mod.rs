//! Synthetic two-domain optical flow data with exact labels.
//!
//! Scenes are a background plane plus foreground shapes, each under its own
//! affine motion. Blur and grain are properties of the textures, so for
//! integer translations frame 2 is an exact re-arrangement of frame 1 on
//! visible pixels.

mod io;
mod scene;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flowcore::{BinaryMask, FlowField, Image, MIN_IMAGE_SIDE};

pub use io::{read_dataset, write_dataset, ManifestEntry, MANIFEST_FILE};
pub use scene::{lattice_value, Affine, Layer, Scene, Shape, Texture, TextureFamily, SUBSAMPLES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionRange {
    /// Per-axis translation drawn from `[-t, t]` px.
    pub max_translation: f64,
    pub max_rotation_deg: f64,
    /// Scale drawn from `[1 - s, 1 + s]`.
    pub max_scale_change: f64,
    /// Round translations to whole pixels (requires no rotation or scaling).
    pub integer: bool,
}

impl MotionRange {
    pub fn translation(max: f64, integer: bool) -> Self {
        MotionRange {
            max_translation: max,
            max_rotation_deg: 0.0,
            max_scale_change: 0.0,
            integer,
        }
    }

    fn validate(&self, what: &str, limit: f64) -> Result<()> {
        if !(0.0..=limit).contains(&self.max_translation) {
            return Err(Error::invalid(
                format!("{what}.max_translation"),
                format!("must lie in [0, {limit}]"),
            ));
        }
        if !(0.0..=45.0).contains(&self.max_rotation_deg) {
            return Err(Error::invalid(
                format!("{what}.max_rotation_deg"),
                "must lie in [0, 45]",
            ));
        }
        if !(0.0..0.5).contains(&self.max_scale_change) {
            return Err(Error::invalid(
                format!("{what}.max_scale_change"),
                "must lie in [0, 0.5)",
            ));
        }
        if self.integer && (self.max_rotation_deg != 0.0 || self.max_scale_change != 0.0) {
            return Err(Error::invalid(
                format!("{what}.integer"),
                "integer motion excludes rotation and scaling",
            ));
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, center: [f64; 2], rng: &mut R) -> Affine {
        let mut sym = |half: f64| {
            if half > 0.0 {
                rng.random_range(-half..=half)
            } else {
                0.0
            }
        };
        let mut t = [sym(self.max_translation), sym(self.max_translation)];
        if self.integer {
            t = t.map(f64::round);
        }
        Affine {
            center,
            translation: t,
            rotation: sym(self.max_rotation_deg).to_radians(),
            scale: 1.0 + sym(self.max_scale_change),
        }
    }
}

/// Distribution over scenes for one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub foreground_layers: usize,
    /// Families drawn uniformly per layer; repeat an entry to weight it.
    pub textures: Vec<TextureFamily>,
    pub background_motion: MotionRange,
    pub foreground_motion: MotionRange,
    /// Half-extent of foreground shapes as a fraction of the shorter side.
    pub shape_size: [f64; 2],
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub brightness_offset: f64,
}

impl SceneSpec {
    /// Same distribution at another resolution. Translation ranges scale with
    /// the shorter side so motion stays proportionate to the frame.
    pub fn resized(&self, height: usize, width: usize) -> Self {
        let k = height.min(width) as f64 / self.height.min(self.width) as f64;
        let mut s = self.clone();
        s.height = height;
        s.width = width;
        s.background_motion.max_translation *= k;
        s.foreground_motion.max_translation *= k;
        s
    }

    /// Sharp checkerboards under large translations.
    pub fn default_source() -> Self {
        SceneSpec {
            height: 64,
            width: 64,
            foreground_layers: 3,
            textures: vec![TextureFamily::Checker],
            background_motion: MotionRange::translation(6.0, false),
            foreground_motion: MotionRange::translation(12.0, false),
            shape_size: [0.12, 0.3],
            blur_sigma: 0.0,
            noise_sigma: 0.0,
            brightness_offset: 0.0,
        }
    }

    /// Blurred grainy noise and gradient textures, brighter, with rotation
    /// and zoom in the motion.
    pub fn default_target() -> Self {
        SceneSpec {
            textures: vec![TextureFamily::Noise, TextureFamily::Gradient],
            background_motion: MotionRange {
                max_translation: 4.0,
                max_rotation_deg: 4.0,
                max_scale_change: 0.03,
                integer: false,
            },
            foreground_motion: MotionRange {
                max_translation: 8.0,
                max_rotation_deg: 8.0,
                max_scale_change: 0.05,
                integer: false,
            },
            blur_sigma: 1.5,
            noise_sigma: 0.02,
            brightness_offset: 0.1,
            ..Self::default_source()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < MIN_IMAGE_SIDE || self.width < MIN_IMAGE_SIDE {
            return Err(Error::invalid(
                "scene.height/width",
                format!("must be at least {MIN_IMAGE_SIDE}"),
            ));
        }
        if self.foreground_layers == 0 {
            return Err(Error::invalid(
                "scene.foreground_layers",
                "need at least one foreground layer",
            ));
        }
        if self.textures.is_empty() {
            return Err(Error::invalid("scene.textures", "empty texture list"));
        }
        let limit = self.height.min(self.width) as f64 / 4.0;
        self.background_motion.validate("scene.background_motion", limit)?;
        self.foreground_motion.validate("scene.foreground_motion", limit)?;
        let [lo, hi] = self.shape_size;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid("scene.shape_size", "need 0 < min <= max <= 1"));
        }
        for (name, v) in [("blur_sigma", self.blur_sigma), ("noise_sigma", self.noise_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("scene.{name}"), "must be finite and >= 0"));
            }
        }
        if !(-1.0..=1.0).contains(&self.brightness_offset) {
            return Err(Error::invalid("scene.brightness_offset", "must lie in [-1, 1]"));
        }
        Ok(())
    }

    /// Short content hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn random_color<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> [f64; 3] {
    [0; 3].map(|_| rng.random_range(lo..hi))
}

fn sample_texture<R: Rng + ?Sized>(family: TextureFamily, blur: f64, rng: &mut R) -> Texture {
    match family {
        TextureFamily::Checker => {
            let period = rng.random_range(4.0..10.0);
            let (mut a, mut b) = (random_color(rng, 0.05, 0.45), random_color(rng, 0.55, 0.95));
            if rng.random_bool(0.5) {
                std::mem::swap(&mut a, &mut b);
            }
            Texture::Checker {
                period,
                phase: [rng.random_range(0.0..period), rng.random_range(0.0..period)],
                colors: [a, b],
                sharpness: period / (std::f64::consts::PI * (blur + 0.35)),
                shade: (0.2, rng.random()),
            }
        }
        TextureFamily::Noise => {
            let octaves = [(1.0 / 16.0, 1.0), (1.0 / 8.0, 0.7), (1.0 / 4.0, 0.5), (1.0 / 2.0, 0.35)]
                .into_iter()
                .map(|(f, a): (f64, f64)| {
                    let damp = (-2.0 * (std::f64::consts::PI * f * blur).powi(2)).exp();
                    (f, a * damp, rng.random::<u64>())
                })
                .collect();
            Texture::Noise {
                base: random_color(rng, 0.35, 0.65),
                tint: random_color(rng, 0.1, 0.25),
                octaves,
            }
        }
        TextureFamily::Gradient => {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let freq = rng.random_range(0.1..0.3);
            Texture::Gradient {
                colors: [random_color(rng, 0.05, 0.5), random_color(rng, 0.5, 0.95)],
                direction: [angle.cos(), angle.sin()],
                length: rng.random_range(24.0..64.0),
                offset: rng.random_range(-0.5..0.5),
                wave: (freq, 0.15 * (-0.5 * (freq * blur).powi(2)).exp()),
            }
        }
    }
}

/// Draws one concrete scene from `spec`.
pub fn sample_scene<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Result<Scene> {
    spec.validate()?;
    let (h, w) = (spec.height as f64, spec.width as f64);
    let side = h.min(w);
    let layer = |shape: Shape, center: [f64; 2], motion: &MotionRange, rng: &mut R| {
        let family = spec.textures[rng.random_range(0..spec.textures.len())];
        Layer {
            shape,
            motion: motion.sample(center, rng),
            texture: sample_texture(family, spec.blur_sigma, rng),
            grain_sigma: spec.noise_sigma,
            grain_seed: rng.random(),
        }
    };
    let centre = [(w - 1.0) / 2.0, (h - 1.0) / 2.0];
    let mut layers = vec![layer(Shape::Plane, centre, &spec.background_motion, rng)];
    for _ in 0..spec.foreground_layers {
        let c = [rng.random_range(0.0..w - 1.0), rng.random_range(0.0..h - 1.0)];
        let [lo, hi] = spec.shape_size;
        let rect = rng.random_bool(0.5);
        let mut extent = || side * rng.random_range(lo..=hi);
        let shape = if rect {
            Shape::Rect {
                center: c,
                half: [extent(), extent()],
            }
        } else {
            Shape::Disk {
                center: c,
                radius: extent(),
            }
        };
        layers.push(layer(shape, c, &spec.foreground_motion, rng));
    }
    Ok(Scene {
        height: spec.height,
        width: spec.width,
        layers,
        brightness: spec.brightness_offset,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub id: String,
    pub seed: u64,
    pub i1: Image,
    pub i2: Image,
    pub gt_flow: FlowField,
    /// `true` where the frame-1 pixel is visible in frame 2.
    pub gt_occlusion: BinaryMask,
    pub gt_valid: BinaryMask,
}

/// Target training pair: images only.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledPair {
    pub id: String,
    pub seed: u64,
    pub i1: Image,
    pub i2: Image,
}

impl LabeledPair {
    pub fn without_labels(&self) -> UnlabeledPair {
        UnlabeledPair {
            id: self.id.clone(),
            seed: self.seed,
            i1: self.i1.clone(),
            i2: self.i2.clone(),
        }
    }
}

/// Renders a scene into a labelled pair.
pub fn render_pair(scene: &Scene, id: impl Into<String>, seed: u64) -> Result<LabeledPair> {
    let (h, w) = (scene.height, scene.width);
    let frame = |second| {
        let mut data = scene.render(second);
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Image::new(3, h, w, data)
    };
    Ok(LabeledPair {
        id: id.into(),
        seed,
        i1: frame(false)?,
        i2: frame(true)?,
        gt_flow: FlowField::new(h, w, scene.flow())?,
        gt_occlusion: BinaryMask::new(h, w, scene.visibility())?,
        gt_valid: BinaryMask::ones(h, w),
    })
}

/// Samples and renders one pair.
pub fn generate_pair<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Result<LabeledPair> {
    let scene = sample_scene(spec, rng)?;
    render_pair(&scene, "pair", 0)
}

/// Pair generated from its own seed, as stored in a dataset.
pub fn generate_seeded(spec: &SceneSpec, id: impl Into<String>, seed: u64) -> Result<LabeledPair> {
    let scene = sample_scene(spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
    render_pair(&scene, id, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Source,
    TargetTrain,
    TargetEval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Source, Split::TargetTrain, Split::TargetEval];

    fn index(self) -> u64 {
        self as u64
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Source => "source",
            Split::TargetTrain => "target_train",
            Split::TargetEval => "target_eval",
        }
    }

    /// Per-pair seed; the residue mod 3 identifies the split, so splits can
    /// never share a seed.
    pub fn seed(self, base: u64, i: usize) -> u64 {
        3 * (base + i as u64) + self.index()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DomainPairs {
    pub source: Vec<LabeledPair>,
    pub target_train: Vec<UnlabeledPair>,
    /// Held-out target pairs with labels, a quarter of the training count.
    pub target_eval: Vec<LabeledPair>,
}

/// `n_pairs` source and target training pairs plus `n_pairs / 4` labelled
/// target evaluation pairs.
pub fn make_domain_pairs<R: Rng + ?Sized>(
    source: &SceneSpec,
    target: &SceneSpec,
    n_pairs: usize,
    rng: &mut R,
) -> Result<DomainPairs> {
    if n_pairs < 4 {
        return Err(Error::invalid("n_pairs", "need at least 4 pairs to split"));
    }
    source.validate()?;
    target.validate()?;
    let base = rng.random::<u32>() as u64;
    let build = |split: Split, spec: &SceneSpec, n: usize| -> Result<Vec<LabeledPair>> {
        (0..n)
            .map(|i| generate_seeded(spec, format!("{}_{i:05}", split.name()), split.seed(base, i)))
            .collect()
    };
    Ok(DomainPairs {
        source: build(Split::Source, source, n_pairs)?,
        target_train: build(Split::TargetTrain, target, n_pairs)?
            .iter()
            .map(LabeledPair::without_labels)
            .collect(),
        target_eval: build(Split::TargetEval, target, n_pairs / 4)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn translation_spec(t: f64) -> SceneSpec {
        SceneSpec {
            height: 16,
            width: 20,
            background_motion: MotionRange::translation(t, true),
            foreground_motion: MotionRange::translation(0.0, true),
            ..SceneSpec::default_source()
        }
    }

    fn background_only(tx: f64, ty: f64) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut scene = sample_scene(&translation_spec(0.0), &mut rng).unwrap();
        scene.layers.truncate(1);
        scene.layers[0].motion = Affine::translation(tx, ty);
        scene
    }

    #[test]
    fn background_translation_has_uniform_flow_and_edge_strip() {
        let scene = background_only(3.0, -2.0);
        let pair = render_pair(&scene, "t", 0).unwrap();
        let (h, w) = (16, 20);
        for y in 0..h {
            for x in 0..w {
                assert_eq!(pair.gt_flow.at(y, x), (3.0, -2.0));
                let visible = x + 3 < w && y >= 2;
                assert_eq!(pair.gt_occlusion.get(y, x), visible, "({x},{y})");
            }
        }
    }

    #[test]
    fn static_scene() {
        let mut spec = translation_spec(0.0);
        spec.foreground_motion = MotionRange::translation(0.0, true);
        let pair = generate_pair(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(pair.i1, pair.i2);
        assert!(pair.gt_flow.data().iter().all(|&v| v == 0.0));
        // Only pixels straddling a shape edge are excluded.
        assert!(pair.gt_occlusion.fraction() > 0.7);
    }

    #[test]
    fn seeded_generation_is_bitwise_deterministic() {
        for spec in [SceneSpec::default_source(), SceneSpec::default_target()] {
            let a = generate_seeded(&spec, "a", 11).unwrap();
            let b = generate_seeded(&spec, "a", 11).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.i1, generate_seeded(&spec, "a", 12).unwrap().i1);
        }
    }

    #[test]
    fn validation() {
        let ok = SceneSpec::default_source();
        assert!(ok.validate().is_ok());
        assert!(SceneSpec::default_target().validate().is_ok());
        for side in [MIN_IMAGE_SIDE, 24, 32, 128] {
            assert!(ok.resized(side, side).validate().is_ok());
            assert!(SceneSpec::default_target().resized(side, side + 8).validate().is_ok());
        }
        assert!(SceneSpec {
            foreground_layers: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(SceneSpec {
            textures: vec![],
            ..ok.clone()
        }
        .validate()
        .is_err());
        let fast = MotionRange::translation(17.0, false);
        assert!(SceneSpec {
            foreground_motion: fast,
            ..ok.clone()
        }
        .validate()
        .is_err());
        let bad = MotionRange {
            max_rotation_deg: 5.0,
            ..MotionRange::translation(1.0, true)
        };
        assert!(SceneSpec {
            background_motion: bad,
            ..ok
        }
        .validate()
        .is_err());
    }

    #[test]
    fn domain_split_sizes_and_disjoint_seeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let small = |s: SceneSpec| SceneSpec {
            height: 16,
            width: 16,
            ..s
        };
        let mut src = small(SceneSpec::default_source());
        src.foreground_motion.max_translation = 4.0;
        src.background_motion.max_translation = 2.0;
        let mut tgt = small(SceneSpec::default_target());
        tgt.foreground_motion.max_translation = 4.0;
        tgt.background_motion.max_translation = 2.0;
        assert!(make_domain_pairs(&src, &tgt, 3, &mut rng).is_err());
        let d = make_domain_pairs(&src, &tgt, 8, &mut rng).unwrap();
        assert_eq!((d.source.len(), d.target_train.len(), d.target_eval.len()), (8, 8, 2));
        let mut seeds: Vec<u64> = d.source.iter().map(|p| p.seed).collect();
        seeds.extend(d.target_train.iter().map(|p| p.seed));
        seeds.extend(d.target_eval.iter().map(|p| p.seed));
        let n = seeds.len();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), n);
    }

    #[test]
    fn spec_hash_tracks_content() {
        let a = SceneSpec::default_source();
        assert_eq!(a.hash(), a.hash());
        assert_eq!(a.hash().len(), 16);
        assert_ne!(a.hash(), SceneSpec::default_target().hash());
    }
}
