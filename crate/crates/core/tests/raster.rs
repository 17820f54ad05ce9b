use mapforge::raster::{mask_iou, rasterize_elements, RasterSpec, NUM_CLASSES};
use mapforge::{ClassLabel, MapElement, PerceptionRange, Point2};
use mapforge_testkit as kit;
use rand::Rng;

/// 128 x 128 pixels at the default resolution.
fn square_range() -> PerceptionRange {
    PerceptionRange::new(-9.6, 9.6, -9.6, 9.6).unwrap()
}

fn random_frame(rng: &mut rand::rngs::StdRng, range: &PerceptionRange) -> Vec<MapElement> {
    let n = rng.random_range(0..8);
    (0..n).map(|_| kit::random_element(rng, range)).collect()
}

#[test]
fn matches_pixel_oracle() {
    let mut rng = kit::rng(20);
    let range = square_range();
    for i in 0..30 {
        let spec = RasterSpec {
            line_half_width: rng.random_range(0.1..1.0),
            fill_polygons: i % 5 != 0,
            ..RasterSpec::default()
        };
        let elements = random_frame(&mut rng, &range);
        let grid = rasterize_elements(&elements, &spec, &range).unwrap();
        let (h, w, data) = kit::raster_oracle(&elements, &spec, &range);
        assert_eq!((grid.height, grid.width), (h, w));
        assert_eq!((h, w), (128, 128));
        assert!(grid.data == data, "frame {i} differs from oracle");
    }
}

#[test]
fn union_of_single_elements() {
    let mut rng = kit::rng(21);
    let range = square_range();
    let spec = RasterSpec::default();
    for _ in 0..10 {
        let elements = random_frame(&mut rng, &range);
        let all = rasterize_elements(&elements, &spec, &range).unwrap();
        let mut union = vec![0u8; all.data.len()];
        for e in &elements {
            let one = rasterize_elements(std::slice::from_ref(e), &spec, &range).unwrap();
            for (u, v) in union.iter_mut().zip(&one.data) {
                *u |= *v;
            }
        }
        assert_eq!(all.data, union);
    }
}

#[test]
fn integer_pixel_translation_shifts_mask() {
    // dyadic coordinates keep every pixel-centre test exact under the shift
    let range = PerceptionRange::new(-8.0, 8.0, -8.0, 8.0).unwrap();
    let spec = RasterSpec {
        resolution: 0.25,
        line_half_width: 0.375,
        fill_polygons: true,
    };
    let line = MapElement::new(
        ClassLabel::Divider,
        vec![Point2::new(-3.0, -2.5), Point2::new(0.5, 1.0), Point2::new(2.25, 1.0)],
    )
    .unwrap();
    let poly = MapElement::new(
        ClassLabel::PedCrossing,
        vec![Point2::new(-1.0, -4.0), Point2::new(2.5, -4.0), Point2::new(2.5, -2.0), Point2::new(-1.0, -2.5)],
    )
    .unwrap();
    let (dc, dr) = (3i64, -2i64);
    let shift = |e: &MapElement| {
        let pts = e
            .points()
            .iter()
            .map(|p| Point2::new(p.x + dc as f64 * 0.25, p.y - dr as f64 * 0.25))
            .collect();
        MapElement::new(e.class(), pts).unwrap()
    };
    let a = rasterize_elements(&[line.clone(), poly.clone()], &spec, &range).unwrap();
    let b = rasterize_elements(&[shift(&line), shift(&poly)], &spec, &range).unwrap();
    for class in ClassLabel::ALL {
        for row in 10..54 {
            for col in 10..54 {
                let src = a.get(class, (row as i64 - dr) as usize, (col as i64 - dc) as usize);
                assert_eq!(b.get(class, row, col), src, "{class} ({row}, {col})");
            }
        }
    }
    assert!(a.count(ClassLabel::Divider) > 0 && a.count(ClassLabel::PedCrossing) > 0);
}

#[test]
fn default_grid_shape_and_empty_input() {
    let grid = rasterize_elements(&[], &RasterSpec::default(), &PerceptionRange::BASE).unwrap();
    assert_eq!((grid.height, grid.width), (400, 200));
    assert_eq!(grid.data.len(), NUM_CLASSES * 400 * 200);
    assert!(grid.data.iter().all(|&b| b == 0));
}

#[test]
fn iou_matches_counting() {
    let mut rng = kit::rng(22);
    let range = square_range();
    let spec = RasterSpec::default();
    let a = rasterize_elements(&random_frame(&mut rng, &range), &spec, &range).unwrap();
    let b = rasterize_elements(&random_frame(&mut rng, &range), &spec, &range).unwrap();
    let inter = a.data.iter().zip(&b.data).filter(|(x, y)| **x != 0 && **y != 0).count();
    let union = a.data.iter().zip(&b.data).filter(|(x, y)| **x != 0 || **y != 0).count();
    let iou = mask_iou(&a.data, &b.data).unwrap();
    if union == 0 {
        assert_eq!(iou, 1.0);
    } else {
        assert_eq!(iou, inter as f64 / union as f64);
    }
    assert_eq!(mask_iou(&a.data, &a.data).unwrap(), 1.0);
    assert!(mask_iou(&a.data, &b.data[1..]).is_err());
}
