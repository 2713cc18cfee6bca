//! OFF parser corpus, sampling statistics, synthetic dataset checks, cache
//! and ingest round-trips.

mod common;

use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sphconv::data::{
    ingest_dataset, load_ingested, parse_off, read_cloud_cache, sample_surface, serialize_off,
    synth_dataset, write_cloud_cache, DataError, SynthClass, TriangleMesh,
};
use sphconv::geometry::{normalize_cloud, Point3};

fn off_err(bytes: &[u8]) -> (usize, String) {
    match parse_off(bytes) {
        Err(DataError::Off { line, message }) => (line, message),
        other => panic!("expected OFF error, got {other:?}"),
    }
}

// --- corpus: well-formed variants ---------------------------------------

#[test]
fn corpus_minimal() {
    let mesh = parse_off(b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
    assert_eq!((mesh.vertices.len(), mesh.faces.len()), (3, 1));
}

#[test]
fn corpus_counts_on_header_line() {
    let mesh = parse_off(b"OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
    assert_eq!(mesh.vertices.len(), 3);
}

#[test]
fn corpus_fused_header_no_space() {
    let mesh = parse_off(b"OFF3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
    assert_eq!(mesh.vertices.len(), 3);
}

#[test]
fn corpus_comments_and_blank_lines() {
    let src = b"# made by hand\nOFF\n\n# counts\n3 1 0\n0 0 0\n\n1 0 0\n0 1 0\n# face\n3 0 1 2\n";
    let mesh = parse_off(src).unwrap();
    assert_eq!(mesh.faces, vec![[0, 1, 2]]);
}

#[test]
fn corpus_crlf_endings() {
    let mesh = parse_off(b"OFF\r\n3 1 0\r\n0 0 0\r\n1 0 0\r\n0 1 0\r\n3 0 1 2\r\n").unwrap();
    assert_eq!(mesh.vertices.len(), 3);
}

#[test]
fn corpus_scientific_notation_vertices() {
    let mesh = parse_off(b"OFF\n3 1 0\n1e-3 0 0\n1.5E2 0 0\n0 1 0\n3 0 1 2\n").unwrap();
    assert_eq!(mesh.vertices[0].x, 1e-3);
    assert_eq!(mesh.vertices[1].x, 150.0);
}

#[test]
fn corpus_quad_and_pentagon_fan() {
    let quad = parse_off(b"OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").unwrap();
    assert_eq!(quad.faces, vec![[0, 1, 2], [0, 2, 3]]);
    let penta =
        parse_off(b"OFF\n5 1 0\n0 0 0\n1 0 0\n2 1 0\n1 2 0\n0 1 0\n5 0 1 2 3 4\n").unwrap();
    assert_eq!(penta.faces, vec![[0, 1, 2], [0, 2, 3], [0, 3, 4]]);
}

#[test]
fn corpus_face_color_tokens_ignored() {
    let mesh =
        parse_off(b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2 255 0 0\n").unwrap();
    assert_eq!(mesh.faces, vec![[0, 1, 2]]);
}

#[test]
fn corpus_vertex_color_tokens_ignored() {
    let mesh =
        parse_off(b"OFF\n3 1 0\n0 0 0 128 0 0\n1 0 0 0 128 0\n0 1 0 0 0 128\n3 0 1 2\n").unwrap();
    assert_eq!(mesh.vertices[1], Point3::new(1.0, 0.0, 0.0));
}

#[test]
fn corpus_zero_faces() {
    let mesh = parse_off(b"OFF\n2 0 0\n0 0 0\n1 1 1\n").unwrap();
    assert!(mesh.faces.is_empty());
    // Zero surface area then fails downstream, not in the parser.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(
        sample_surface(&mesh, 8, &mut rng),
        Err(DataError::ZeroSurfaceArea)
    ));
}

#[test]
fn corpus_round_trip_identity() {
    let src = b"OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0.5\n0 1 1\n3 0 1 2\n3 0 2 3\n";
    let mesh = parse_off(src).unwrap();
    let back = parse_off(serialize_off(&mesh).as_bytes()).unwrap();
    assert_eq!(back, mesh);
}

// --- corpus: malformed inputs with line numbers --------------------------

#[test]
fn corpus_empty_file() {
    let (line, msg) = off_err(b"");
    assert_eq!(line, 1);
    assert!(msg.contains("empty"));
}

#[test]
fn corpus_missing_off_keyword() {
    let (line, msg) = off_err(b"PLY\n3 1 0\n");
    assert_eq!(line, 1);
    assert!(msg.contains("OFF"));
}

#[test]
fn corpus_bad_counts() {
    let (line, _) = off_err(b"OFF\nthree 1 0\n");
    assert_eq!(line, 2);
    let (line, _) = off_err(b"OFF\n3\n");
    assert_eq!(line, 2);
}

#[test]
fn corpus_truncated_vertices() {
    let (_, msg) = off_err(b"OFF\n3 1 0\n0 0 0\n1 0 0\n");
    assert!(msg.contains("truncated"));
}

#[test]
fn corpus_truncated_faces() {
    let (_, msg) = off_err(b"OFF\n3 2 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
    assert!(msg.contains("truncated"));
}

#[test]
fn corpus_bad_vertex_token() {
    let (line, msg) = off_err(b"OFF\n3 1 0\n0 0 0\n1 zero 0\n0 1 0\n3 0 1 2\n");
    assert_eq!(line, 4);
    assert!(msg.contains("zero"));
}

#[test]
fn corpus_vertex_with_too_few_coords() {
    let (line, _) = off_err(b"OFF\n3 1 0\n0 0 0\n1 0\n0 1 0\n3 0 1 2\n");
    assert_eq!(line, 4);
}

#[test]
fn corpus_face_index_out_of_range() {
    let (line, msg) = off_err(b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 3\n");
    assert_eq!(line, 6);
    assert!(msg.contains("out of range"));
}

#[test]
fn corpus_face_with_fewer_indices_than_declared() {
    let (line, msg) = off_err(b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2\n");
    assert_eq!(line, 6);
    assert!(msg.contains("declares"));
}

#[test]
fn corpus_degenerate_face_arity() {
    let (line, msg) = off_err(b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n2 0 1\n");
    assert_eq!(line, 6);
    assert!(msg.contains("at least 3"));
}

#[test]
fn corpus_non_finite_vertex() {
    let (line, msg) = off_err(b"OFF\n3 1 0\n0 0 0\ninf 0 0\n0 1 0\n3 0 1 2\n");
    assert_eq!(line, 4);
    assert!(msg.contains("non-finite"));
}

// --- sampling / synthetic / caches ---------------------------------------

#[test]
fn ingested_clouds_are_normalized() {
    let mesh = TriangleMesh {
        vertices: vec![
            Point3::new(10.0, 5.0, 3.0),
            Point3::new(14.0, 5.0, 3.0),
            Point3::new(10.0, 9.0, 3.0),
        ],
        faces: vec![[0, 1, 2]],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cloud = sample_surface(&mesh, 500, &mut rng).unwrap();
    let normalized = normalize_cloud(&cloud).unwrap();
    let max_abs = normalized
        .points
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()).max(p.z.abs()))
        .fold(0.0_f64, f64::max);
    assert_eq!(max_abs, 1.0);
}

#[test]
fn synth_classes_have_expected_geometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sphere = sphconv::data::sample_class_surface(SynthClass::Sphere, 2000, &mut rng);
    for p in &sphere.points {
        assert!((p.norm() - 1.0).abs() < 1e-9);
    }
    let cube = sphconv::data::sample_class_surface(SynthClass::Cube, 2000, &mut rng);
    for p in &cube.points {
        let m = p.x.abs().max(p.y.abs()).max(p.z.abs());
        assert!((m - 1.0).abs() < 1e-9, "cube point not on a face: {p:?}");
    }
    let torus = sphconv::data::sample_class_surface(SynthClass::Torus, 2000, &mut rng);
    for p in &torus.points {
        let ring = (p.x * p.x + p.y * p.y).sqrt();
        let tube = ((ring - 0.7).powi(2) + p.z * p.z).sqrt();
        assert!((tube - 0.25).abs() < 1e-9, "torus point off tube: {p:?}");
    }
}

#[test]
fn cloud_cache_survives_exact_f32_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.pcd");
    let cloud = common::random_cloud(100, 3);
    write_cloud_cache(&path, &cloud).unwrap();
    let back = read_cloud_cache(&path).unwrap();
    assert_eq!(back.len(), cloud.len());
    for (a, b) in back.points.iter().zip(&cloud.points) {
        assert!(a.dist(b) < 1e-6, "f32 cache resolution");
    }
}

#[test]
fn ingest_directory_round_trip_and_determinism() {
    let root = tempfile::tempdir().unwrap();
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    // Two classes, train+test splits, one broken file.
    let tri = b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
    let quad = b"OFF\n4 1 0\n0 0 0\n2 0 0\n2 2 0\n0 2 1\n4 0 1 2 3\n";
    for (class, bytes) in [("shapea", &tri[..]), ("shapeb", &quad[..])] {
        for split in ["train", "test"] {
            let dir = root.path().join(class).join(split);
            fs::create_dir_all(&dir).unwrap();
            fs::write(dir.join("s0.off"), bytes).unwrap();
            fs::write(dir.join("s1.off"), bytes).unwrap();
        }
    }
    fs::write(root.path().join("shapea/train/broken.off"), b"OFF\n9 9 9\nnope").unwrap();

    let report_a = ingest_dataset(root.path(), out_a.path(), 200, 7).unwrap();
    assert_eq!(report_a.written, 8);
    assert_eq!(report_a.failures.len(), 1);

    let ds = load_ingested(out_a.path()).unwrap();
    assert_eq!(ds.class_names, vec!["shapea".to_string(), "shapeb".to_string()]);
    assert_eq!(ds.train.len(), 4);
    assert_eq!(ds.test.len(), 4);
    assert!(ds.train.iter().all(|s| s.cloud.len() == 200));

    // Same seed → byte-identical caches.
    ingest_dataset(root.path(), out_b.path(), 200, 7).unwrap();
    let cache_rel = "shapea/train/s0.pcd";
    let a = fs::read(out_a.path().join(cache_rel)).unwrap();
    let b = fs::read(out_b.path().join(cache_rel)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn synth_dataset_counts_for_acceptance_shape() {
    let ds = synth_dataset(125, 64, 0.01, 1).unwrap();
    assert_eq!(ds.train.len(), 400);
    assert_eq!(ds.test.len(), 100);
    assert_eq!(ds.num_classes(), 4);
}
