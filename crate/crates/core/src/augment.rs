//! Image perturbations: the online `augment` used for labeled inputs and
//! target generation, and the offline `extend` that expands the unlabeled
//! pool into several independently augmented copies.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::config::AugmentPolicy;
use crate::data::ImageShape;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor_io::{self, sha256_hex};

fn check(shape: ImageShape, image_len: usize, policy: &AugmentPolicy) -> Result<()> {
    if image_len != shape.len() {
        return Err(Error::Shape(format!(
            "image has {image_len} values, shape {shape:?} needs {}",
            shape.len()
        )));
    }
    if policy.cutout_size > shape.height.min(shape.width) {
        return Err(Error::Shape(format!(
            "cutout of {} px does not fit a {}x{} image",
            policy.cutout_size, shape.height, shape.width
        )));
    }
    Ok(())
}

pub fn flip_horizontal(image: &[f32], shape: ImageShape) -> Vec<f32> {
    let mut out = vec![0.0; image.len()];
    for y in 0..shape.height {
        for x in 0..shape.width {
            let src = shape.index(y, shape.width - 1 - x, 0);
            let dst = shape.index(y, x, 0);
            out[dst..dst + shape.channels].copy_from_slice(&image[src..src + shape.channels]);
        }
    }
    out
}

/// Shifts content by (`dy`, `dx`) pixels; vacated pixels become 0.
pub fn translate(image: &[f32], shape: ImageShape, dy: isize, dx: isize) -> Vec<f32> {
    let mut out = vec![0.0; image.len()];
    let (h, w) = (shape.height as isize, shape.width as isize);
    for y in 0..h {
        let sy = y - dy;
        if !(0..h).contains(&sy) {
            continue;
        }
        for x in 0..w {
            let sx = x - dx;
            if !(0..w).contains(&sx) {
                continue;
            }
            let src = shape.index(sy as usize, sx as usize, 0);
            let dst = shape.index(y as usize, x as usize, 0);
            out[dst..dst + shape.channels].copy_from_slice(&image[src..src + shape.channels]);
        }
    }
    out
}

/// Fills a `size`x`size` square centred at (`cy`, `cx`), clipped at the
/// borders.
pub fn cutout(image: &mut [f32], shape: ImageShape, cy: usize, cx: usize, size: usize, fill: f32) {
    let y0 = cy as isize - (size / 2) as isize;
    let x0 = cx as isize - (size / 2) as isize;
    let ys = y0.max(0) as usize..((y0 + size as isize).min(shape.height as isize)).max(0) as usize;
    let xs = x0.max(0) as usize..((x0 + size as isize).min(shape.width as isize)).max(0) as usize;
    for y in ys {
        for x in xs.clone() {
            let i = shape.index(y, x, 0);
            image[i..i + shape.channels].fill(fill);
        }
    }
}

/// Applies flip, then translation, then cutout, as enabled by `policy`.
pub fn augment<R: Rng + ?Sized>(
    image: &[f32],
    shape: ImageShape,
    policy: &AugmentPolicy,
    rng: &mut R,
) -> Result<Vec<f32>> {
    check(shape, image.len(), policy)?;
    let mut out = image.to_vec();
    if policy.horizontal_flip && rng.random::<f64>() < policy.flip_prob {
        out = flip_horizontal(&out, shape);
    }
    if policy.translate_max > 0 {
        let t = policy.translate_max as i64;
        let dy = rng.random_range(-t..=t) as isize;
        let dx = rng.random_range(-t..=t) as isize;
        if dy != 0 || dx != 0 {
            out = translate(&out, shape, dy, dx);
        }
    }
    if policy.cutout_size > 0 {
        let cy = rng.random_range(0..shape.height);
        let cx = rng.random_range(0..shape.width);
        cutout(
            &mut out,
            shape,
            cy,
            cx,
            policy.cutout_size,
            policy.fill_value as f32,
        );
    }
    Ok(out)
}

/// Produces `copies` augmented versions of every image in `images`
/// (row-major `[n, H, W, C]`). Output is copy-major: copy 0 of every image,
/// then copy 1, and so on. Image `i` of copy `c` draws from
/// `stream.derive(c * n + i)`.
pub fn extend(
    images: &[f32],
    shape: ImageShape,
    copies: usize,
    policy: &AugmentPolicy,
    stream: &RngStream,
) -> Result<Vec<f32>> {
    if copies == 0 {
        return Err(Error::validation("extend_copies", "must be >= 1"));
    }
    let len = shape.len();
    if !images.len().is_multiple_of(len) {
        return Err(Error::Shape(format!(
            "{} values is not a whole number of {shape:?} images",
            images.len()
        )));
    }
    check(shape, len, policy)?;
    let n = images.len() / len;
    let mut out = Vec::with_capacity(images.len() * copies);
    for c in 0..copies {
        for (i, image) in images.chunks_exact(len).enumerate() {
            let mut rng = stream.derive((c * n + i) as u64).rng();
            out.extend(augment(image, shape, policy, &mut rng)?);
        }
    }
    Ok(out)
}

/// Cache key for an extended pool:
/// `extend-<input sha256[..16]>-<policy sha256[..16]>-c<copies>-s<seed>`.
pub fn extend_cache_key(
    images: &[f32],
    shape: ImageShape,
    copies: usize,
    policy: &AugmentPolicy,
    seed: u64,
) -> String {
    let mut bytes = tensor_io::encode(images);
    bytes.extend(tensor_io::encode(&[
        shape.height as u32,
        shape.width as u32,
        shape.channels as u32,
    ]));
    let input = sha256_hex(&bytes);
    let policy = sha256_hex(
        serde_json::to_string(policy)
            .expect("policy serializes")
            .as_bytes(),
    );
    format!("extend-{}-{}-c{copies}-s{seed}", &input[..16], &policy[..16])
}

/// Where a cached pool lives: `<cache_dir>/<key>/pool.{bin,json}`.
pub fn extend_cache_path(cache_dir: &Path, key: &str) -> PathBuf {
    cache_dir.join(key).join("pool")
}

/// Like [`extend`], but reuses `<cache_dir>/<key>` when it holds a valid
/// pool and writes one otherwise.
pub fn extend_cached(
    cache_dir: Option<&Path>,
    images: &[f32],
    shape: ImageShape,
    copies: usize,
    policy: &AugmentPolicy,
    stream: &RngStream,
) -> Result<Vec<f32>> {
    let Some(dir) = cache_dir else {
        return extend(images, shape, copies, policy, stream);
    };
    let key = extend_cache_key(images, shape, copies, policy, stream.seed());
    let stem = extend_cache_path(dir, &key);
    if tensor_io::header_path(&stem).exists() {
        match tensor_io::read_tensor::<f32>(&stem) {
            Ok((_, pool)) if pool.len() == images.len() * copies => return Ok(pool),
            Ok(_) => log::warn!("{}: cached pool has the wrong size, rebuilding", stem.display()),
            Err(e) => log::warn!("{}: {e}, rebuilding", stem.display()),
        }
    }
    let pool = extend(images, shape, copies, policy, stream)?;
    let n = pool.len() / shape.len();
    tensor_io::write_tensor(
        &stem,
        &[n, shape.height, shape.width, shape.channels],
        &pool,
    )?;
    Ok(pool)
}
