use quadwind::trajectory::TrajectoryKind;
use quadwind_web::{drag, fly, reference_path, trajectory_names, Compensation};

#[test]
fn names_parse_back() {
    let names = trajectory_names();
    assert_eq!(names.len(), 7);
    for n in names {
        assert!(n.parse::<TrajectoryKind>().is_ok(), "{n}");
    }
}

#[test]
fn circle_path_stays_on_radius() {
    let pts = reference_path(TrajectoryKind::Circle, 20.0, 0.1).unwrap();
    assert_eq!(pts.len(), 201);
    for p in &pts {
        assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 2.0).abs() < 1e-12);
    }
    assert!(reference_path(TrajectoryKind::Circle, 0.0, 0.1).is_err());
    assert!(reference_path(TrajectoryKind::Circle, 25.0, 0.1).is_err());
}

#[test]
fn drag_opposes_relative_air() {
    assert_eq!(drag([0.0; 3], [0.0, 0.0]).unwrap(), [0.0; 3]);
    let a = drag([0.0, 0.0, 1.0], [5.0, 0.0]).unwrap();
    assert!((a[0] - 1.5).abs() < 1e-12 && a[1] == 0.0 && (a[2] + 0.15).abs() < 1e-12);
    assert!(drag([f64::NAN, 0.0, 0.0], [0.0, 0.0]).is_err());
}

#[test]
fn oracle_compensation_tracks_better_in_wind() {
    let nom = fly(TrajectoryKind::Circle, [5.0, 0.0], 3.0, Compensation::Nominal).unwrap();
    let orc = fly(TrajectoryKind::Circle, [5.0, 0.0], 3.0, Compensation::Oracle).unwrap();
    assert_eq!(nom.actual().len(), nom.reference().len());
    assert!(orc.rmse() < nom.rmse(), "{} vs {}", orc.rmse(), nom.rmse());
    assert!(nom.max_error() >= nom.rmse());
    assert!("sideways".parse::<Compensation>().is_err());
}
