//! Synthetic shape corpus and external grid ingestion. Each dataset is a
//! directory of VOXG occupancy grids with rendered PFM depth references and
//! a plain-text manifest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::geometry::{render_depth, voxelize_cuboids, Cuboid, DepthMap, OccupancyGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    BoxyTables,
    BoxyPlanes,
    BoxyCars,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::BoxyTables, Category::BoxyPlanes, Category::BoxyCars];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::BoxyTables => "boxy-tables",
            Category::BoxyPlanes => "boxy-planes",
            Category::BoxyCars => "boxy-cars",
        }
    }

    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "boxy-tables" => Ok(Category::BoxyTables),
            "boxy-planes" => Ok(Category::BoxyPlanes),
            "boxy-cars" => Ok(Category::BoxyCars),
            other => Err(Error::contract(format!("unknown category {other}"))),
        }
    }

    fn stem(&self) -> &'static str {
        match self {
            Category::BoxyTables => "table",
            Category::BoxyPlanes => "plane",
            Category::BoxyCars => "car",
        }
    }
}

/// A target shape paired with its rendered reference.
#[derive(Clone, Debug)]
pub struct Shape {
    pub name: String,
    pub category: String,
    pub target: Arc<OccupancyGrid>,
    pub reference: Arc<DepthMap>,
}

fn span(rng: &mut impl Rng, lo: i32, hi: i32, min_len: i32, max_len: i32) -> (i32, i32) {
    let len = rng.gen_range(min_len..=max_len.max(min_len));
    let start = rng.gen_range(lo..=(hi - len).max(lo));
    (start, start + len)
}

/// A random union of 2-5 axis-aligned boxes with category proportions:
/// tables are a slab on legs, planes a fuselage with wings, cars a body
/// with a cabin.
pub fn generate_shape(category: Category, resolution: u32, rng: &mut impl Rng) -> OccupancyGrid {
    let r = resolution as i32;
    let m = (r / 8).max(1);
    let thin = (r / 16).max(1);
    let mut boxes: Vec<Cuboid> = Vec::new();
    match category {
        Category::BoxyTables => {
            let (x0, x1) = span(rng, m, r - m, r / 2, r - 2 * m);
            let (z0, z1) = span(rng, m, r - m, r / 2, r - 2 * m);
            let top = rng.gen_range(r / 2..=3 * r / 4);
            let thickness = rng.gen_range(thin..=(r / 8).max(thin));
            boxes.push(Cuboid::new([x0, top, z0], [x1, top + thickness, z1]));
            let leg_w = rng.gen_range(thin..=(r / 8).max(thin));
            let legs = if rng.gen_bool(0.7) { 4 } else { 2 };
            let corners: [(i32, i32); 4] =
                [(x0, z0), (x1 - leg_w, z0), (x0, z1 - leg_w), (x1 - leg_w, z1 - leg_w)];
            for &(lx, lz) in corners.iter().take(legs) {
                boxes.push(Cuboid::new([lx, 0, lz], [lx + leg_w, top, lz + leg_w]));
            }
        }
        Category::BoxyPlanes => {
            let mid = r / 2;
            let half = rng.gen_range(thin..=(r / 8).max(thin));
            let (x0, x1) = span(rng, m / 2, r - m / 2, 3 * r / 4, r - m);
            boxes.push(Cuboid::new([x0, mid - half, mid - half], [x1, mid + half, mid + half]));
            // Wings: a thin full-depth slab crossing the fuselage.
            let wing_t = rng.gen_range(thin..=(thin * 2).min(r / 8).max(thin));
            let (wx0, wx1) = span(rng, x0, x1, (x1 - x0) / 4, (x1 - x0) / 2);
            boxes.push(Cuboid::new([wx0, mid - wing_t, m / 2], [wx1, mid + wing_t, r - m / 2]));
            if rng.gen_bool(0.6) {
                // Tail fin.
                let fin = rng.gen_range(thin..=(r / 6).max(thin));
                boxes.push(Cuboid::new(
                    [x1 - fin.max(1), mid, mid - thin],
                    [x1, (mid + r / 4).min(r), mid + thin],
                ));
            }
        }
        Category::BoxyCars => {
            let (x0, x1) = span(rng, m, r - m, r / 2, r - 2 * m);
            let (z0, z1) = span(rng, r / 4, 3 * r / 4, r / 4, r / 2);
            let floor = r / 8;
            let roof = rng.gen_range(r / 3..=r / 2);
            boxes.push(Cuboid::new([x0, floor, z0], [x1, roof, z1]));
            // Cabin on top, inset along x.
            let inset = (x1 - x0) / 4;
            let cab_top = rng.gen_range(roof + 1..=(roof + r / 4).min(r));
            boxes.push(Cuboid::new([x0 + inset, roof, z0], [x1 - inset, cab_top, z1]));
            if rng.gen_bool(0.5) {
                // Bumper block.
                boxes.push(Cuboid::new(
                    [x0, floor, z0],
                    [(x0 + (r / 8).max(1)).min(x1), roof - (roof - floor) / 2, z1],
                ));
            }
        }
    }
    debug_assert!((2..=5).contains(&boxes.len()));
    debug_assert!(boxes.iter().all(|b| b.in_bounds(resolution)));
    voxelize_cuboids(&boxes, resolution)
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.txt")
}

/// Writes `count` shapes of one category: `<name>.voxg`, `<name>.pfm`, and a
/// manifest. Deterministic for a given seed.
pub fn generate_dataset(
    dir: &Path,
    count: usize,
    category: Category,
    resolution: u32,
    seed: u64,
) -> Result<Vec<Shape>> {
    if count == 0 {
        return Err(Error::contract("dataset count must be at least 1"));
    }
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = String::new();
    manifest.push_str(&format!("resolution {resolution}\n"));
    let mut shapes = Vec::with_capacity(count);
    for i in 0..count {
        let name = format!("{}_{:03}", category.stem(), i);
        let grid = generate_shape(category, resolution, &mut rng);
        debug_assert!(!grid.is_empty());
        let depth = render_depth(&grid);
        let mut gw = BufWriter::new(File::create(dir.join(format!("{name}.voxg")))?);
        grid.write_voxg(&mut gw)?;
        gw.flush()?;
        let mut dw = BufWriter::new(File::create(dir.join(format!("{name}.pfm")))?);
        depth.write_pfm(&mut dw)?;
        dw.flush()?;
        manifest.push_str(&format!("shape {name} {}\n", category.as_str()));
        shapes.push(Shape {
            name,
            category: category.as_str().to_string(),
            target: Arc::new(grid),
            reference: Arc::new(depth),
        });
    }
    std::fs::write(manifest_path(dir), manifest)?;
    Ok(shapes)
}

/// Loads a dataset directory written by `generate_dataset` or `ingest`.
pub fn load_dataset(dir: &Path) -> Result<Vec<Shape>> {
    let text = std::fs::read_to_string(manifest_path(dir))
        .map_err(|_| Error::format("manifest", format!("missing {}", manifest_path(dir).display())))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format("manifest", "empty"))?;
    let resolution: u32 = header
        .strip_prefix("resolution ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("manifest", "first line must be `resolution <R>`"))?;
    let mut shapes = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "shape" {
            return Err(Error::format("manifest", format!("bad line: {line}")));
        }
        let (name, category) = (parts[1], parts[2]);
        let grid = OccupancyGrid::read_voxg(&mut BufReader::new(File::open(
            dir.join(format!("{name}.voxg")),
        )?))?;
        if grid.resolution() != resolution {
            return Err(Error::ResolutionMismatch(resolution, grid.resolution()));
        }
        let depth =
            DepthMap::read_pfm(&mut BufReader::new(File::open(dir.join(format!("{name}.pfm")))?))?;
        shapes.push(Shape {
            name: name.to_string(),
            category: category.to_string(),
            target: Arc::new(grid),
            reference: Arc::new(depth),
        });
    }
    if shapes.is_empty() {
        return Err(Error::format("manifest", "no shapes listed"));
    }
    Ok(shapes)
}

/// Validates external VOXG files, renders their depth references, and lays
/// them out as a dataset. All grids must share one resolution; failures are
/// reported per file.
pub fn ingest(files: &[PathBuf], out_dir: &Path, category: &str) -> Result<Vec<Shape>> {
    if files.is_empty() {
        return Err(Error::contract("no files to ingest"));
    }
    let mut grids = Vec::new();
    let mut problems = Vec::new();
    for path in files {
        match File::open(path)
            .map_err(Error::from)
            .and_then(|f| OccupancyGrid::read_voxg(&mut BufReader::new(f)))
        {
            Ok(grid) => grids.push((path, grid)),
            Err(e) => problems.push(format!("{}: {e}", path.display())),
        }
    }
    if let Some((_, first)) = grids.first() {
        let r = first.resolution();
        for (path, grid) in &grids {
            if grid.resolution() != r {
                problems.push(format!(
                    "{}: resolution {} does not match {}",
                    path.display(),
                    grid.resolution(),
                    r
                ));
            }
        }
    }
    if !problems.is_empty() {
        return Err(Error::format("ingest", problems.join("; ")));
    }
    std::fs::create_dir_all(out_dir)?;
    let resolution = grids[0].1.resolution();
    let mut manifest = format!("resolution {resolution}\n");
    let mut shapes = Vec::new();
    for (i, (path, grid)) in grids.into_iter().enumerate() {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("shape_{i:03}"));
        let depth = render_depth(&grid);
        let mut gw = BufWriter::new(File::create(out_dir.join(format!("{name}.voxg")))?);
        grid.write_voxg(&mut gw)?;
        gw.flush()?;
        let mut dw = BufWriter::new(File::create(out_dir.join(format!("{name}.pfm")))?);
        depth.write_pfm(&mut dw)?;
        dw.flush()?;
        manifest.push_str(&format!("shape {name} {category}\n"));
        shapes.push(Shape {
            name,
            category: category.to_string(),
            target: Arc::new(grid),
            reference: Arc::new(depth),
        });
    }
    std::fs::write(manifest_path(out_dir), manifest)?;
    Ok(shapes)
}
