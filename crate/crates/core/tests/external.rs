use model_swarms::utility::{ExternalUtility, ExternalUtilitySpec};
use model_swarms::{search, ParamVector, SwarmConfig, SwarmError, Utility};

fn external(command: &str) -> ExternalUtility {
    ExternalUtility::new(ExternalUtilitySpec {
        command: command.to_string(),
        workdir: None,
        timeout_secs: 30.0,
    })
    .unwrap()
}

fn has_python() -> bool {
    std::process::Command::new("python3").arg("--version").output().is_ok()
}

#[test]
fn constant_score() {
    let u = external("echo 0.75");
    assert_eq!(u.evaluate(&ParamVector::zeros(4)).unwrap(), 0.75);
}

#[test]
fn script_reads_the_checkpoint() {
    if !has_python() {
        eprintln!("python3 not available; skipping");
        return;
    }
    // First payload value sits right after the 16-byte header.
    let u = external(
        "python3 -c \"import struct,sys; d=open(sys.argv[1],'rb').read(); print(struct.unpack('<f', d[16:20])[0])\" {checkpoint}",
    );
    let x = ParamVector::new(vec![-2.5, 7.0]).unwrap();
    assert_eq!(u.evaluate(&x).unwrap(), -2.5);
}

#[test]
fn failure_carries_stderr() {
    let u = external("echo 'model exploded' >&2; exit 1");
    let err = u.evaluate(&ParamVector::zeros(1)).unwrap_err();
    assert!(err.stderr.unwrap().contains("model exploded"));
}

#[test]
fn non_numeric_output_is_an_error() {
    let u = external("echo accuracy: high");
    assert!(u.evaluate(&ParamVector::zeros(1)).is_err());
}

#[test]
fn search_over_an_external_objective() {
    if !has_python() {
        eprintln!("python3 not available; skipping");
        return;
    }
    // Negative squared norm computed out of process.
    let u = external(
        "python3 -c \"import struct,sys; d=open(sys.argv[1],'rb').read(); n=struct.unpack('<Q', d[8:16])[0]; \
         v=struct.unpack('<%df' % n, d[16:]); print(-sum(a*a for a in v))\" {checkpoint}",
    );
    let experts = vec![
        ParamVector::new(vec![1.0, 1.0]).unwrap(),
        ParamVector::new(vec![-2.0, 0.5]).unwrap(),
    ];
    let cfg = SwarmConfig {
        swarm_size: 4,
        max_iterations: 3,
        ..SwarmConfig::default().with_seed(2)
    };
    let out = search(&experts, &u, &cfg).unwrap();
    assert!(out.f_best >= -2.0);
    assert!(out.log.len() <= 4);
}

#[test]
fn failing_evaluator_aborts_the_search() {
    let u = external("exit 3");
    let experts = vec![ParamVector::zeros(1)];
    let err = search(&experts, &u, &SwarmConfig::default()).unwrap_err();
    assert!(matches!(err, SwarmError::Evaluation { particle: 0, .. }), "{err}");
}
