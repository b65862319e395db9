use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reform_core::exemplar_db::{build_database, Database};
use reform_core::fabrication::{FabricationSpec, JointCategory, JointKind};
use reform_core::geometry::Material;
use reform_core::pipeline::{run_pipeline, JointOverride, PipelineConfig, PipelineState, TargetMaterials};
use reform_core::synthetic::{generate_model, generate_synthetic_database, Category, GeneratorConfig, Style};

fn small_db(cfg: &PipelineConfig) -> Database {
    let models = generate_synthetic_database(&GeneratorConfig::scaled([6, 4, 3, 3], 1.0), 11);
    let mut db = build_database(&models, &cfg.analysis()).unwrap();
    db.cluster_candidates(24, cfg.seed).unwrap();
    db
}

fn fast_config() -> PipelineConfig {
    PipelineConfig {
        samples_per_part: 300,
        ..PipelineConfig::default()
    }
}

#[test]
fn target_parsing() {
    assert_eq!("suggest".parse::<TargetMaterials>().unwrap(), TargetMaterials::Suggest);
    assert_eq!("all=metal".parse::<TargetMaterials>().unwrap(), TargetMaterials::All(Material::Metal));
    assert_eq!(
        "0=wood,seat=metal".parse::<TargetMaterials>().unwrap(),
        TargetMaterials::PerPart(vec![("0".into(), Material::Wood), ("seat".into(), Material::Metal)])
    );
    for bad in ["all=other", "all=wood,1=metal", "x", "0=plastic"] {
        assert!(bad.parse::<TargetMaterials>().is_err(), "{bad}");
    }
    let o: JointOverride = "3, 5=mortise_tenon".parse().unwrap();
    assert_eq!((o.i, o.j, o.kind), (3, 5, JointKind::MortiseTenon));
    assert!("3=weld".parse::<JointOverride>().is_err());
}

#[test]
fn config_round_trips_and_rejects_bad_values() {
    let mut cfg = fast_config();
    cfg.targets = TargetMaterials::All(Material::Wood);
    let text = serde_json::to_string(&cfg).unwrap();
    let back: PipelineConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    cfg.contact_distance = -1.0;
    assert!(cfg.validate().is_err());
    assert!(serde_json::from_str::<PipelineConfig>(r#"{"unknown": 1}"#).is_err());
}

#[test]
fn wooden_chair_reformed_to_metal() {
    let cfg = PipelineConfig {
        targets: TargetMaterials::All(Material::Metal),
        ..fast_config()
    };
    let db = small_db(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let chair = generate_model(Category::Chair, Style::Wood, "query", &mut rng).model;
    let dir = tempfile::tempdir().unwrap();
    let (state, spec) = run_pipeline(&chair, &db, cfg, Some(dir.path())).unwrap();
    let spec = spec.unwrap();

    let refined = state.refined.as_ref().unwrap();
    assert_eq!(refined.parts.len(), chair.parts.len());
    assert!(refined.parts.iter().all(|p| p.material == Material::Metal));
    let joints = state.joints.as_ref().unwrap();
    assert!(!joints.is_empty());
    assert!(joints.iter().all(|j| j.joint.category == JointCategory::MetalMetal));
    let report = state.restore_report.as_ref().unwrap();
    assert!(report.objective_after <= report.objective_before + 1e-12);

    let loaded = FabricationSpec::load(&dir.path().join("spec/spec.json")).unwrap();
    assert_eq!(loaded, spec);
    for p in &spec.parts {
        assert!(dir.path().join("spec").join(&p.mesh).exists());
    }
    assert!(dir.path().join("reformed.obj").exists());
    let saved = PipelineState::load(&dir.path().join("state.json")).unwrap();
    assert_eq!(saved.logs.len(), state.logs.len());
    let logs: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("stage_logs.json")).unwrap()).unwrap();
    assert_eq!(logs.as_array().unwrap().len(), state.logs.len());
}

#[test]
fn suggested_materials_drive_reform() {
    let cfg = fast_config();
    let db = small_db(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let table = generate_model(Category::Table, Style::Wood, "query", &mut rng).model;
    let (state, spec) = run_pipeline(&table, &db, cfg, None).unwrap();
    assert!(spec.is_none());
    let s = state.suggestion.as_ref().unwrap();
    let choice = state.reform.as_ref().unwrap();
    assert_eq!(&choice.targets, &s.materials);
    for p in &state.refined.as_ref().unwrap().parts {
        assert_eq!(Some(&p.material), s.materials.get(&p.id));
    }
}

#[test]
fn open_contacts_get_no_joint() {
    // Narrower exemplar planks cannot tile the original top, leaving plank contacts open.
    let cfg = PipelineConfig {
        targets: TargetMaterials::All(Material::Wood),
        ..PipelineConfig::default()
    };
    let models = generate_synthetic_database(&GeneratorConfig::scaled([6, 4, 3, 3], 1.0), 10);
    let mut db = build_database(&models, &cfg.analysis()).unwrap();
    db.cluster_candidates(40, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let _ = generate_model(Category::Chair, Style::Wood, "query", &mut rng);
    let table = generate_model(Category::Table, Style::Wood, "query", &mut rng).model;
    let dir = tempfile::tempdir().unwrap();
    let (state, spec) = run_pipeline(&table, &db, cfg, Some(dir.path())).unwrap();
    let spec = spec.unwrap();
    assert!(!state.open_contacts.is_empty());
    assert_eq!(spec.open_contacts, state.open_contacts);
    for &(i, j) in &spec.open_contacts {
        assert!(!spec.joints.iter().any(|jt| (jt.i, jt.j) == (i, j)));
    }
    assert_eq!(FabricationSpec::load(&dir.path().join("spec/spec.json")).unwrap(), spec);
}
