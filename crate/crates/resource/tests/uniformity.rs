//! The same submit / poll / cancel suite, run unmodified against both backends.

use blockflow_core::{JobDescription, ResourceError, State, StateError};
use blockflow_resource::{Backend, LocalBackend, Policy, ResourceHandle, ResourceModel, SimBatch};

fn sleep_job(cores: u32, secs: f64, walltime: f64) -> JobDescription {
    JobDescription::new(cores, walltime, "batch")
        .with_command("/bin/sleep", vec![format!("{secs}")])
        .with_runtime(secs)
}

fn backends(cores: u32) -> Vec<(&'static str, ResourceHandle)> {
    let model = ResourceModel::single_queue("uni", cores, 60.0, Policy::FcfsBackfill);
    let sim: Box<dyn Backend> = Box::new(SimBatch::new(model.clone()).unwrap());
    let local: Box<dyn Backend> = Box::new(LocalBackend::new(model).unwrap());
    vec![("sim", ResourceHandle::spawn(sim)), ("local", ResourceHandle::spawn(local))]
}

#[test]
fn submit_runs_and_completes() {
    for (name, h) in backends(4) {
        let id = h.submit_job(sleep_job(1, 0.1, 2.0)).unwrap();
        assert_eq!(h.job_state(&id).unwrap().state, State::Running, "{name}");
        let now = h.now().unwrap();
        h.step_queue(now + 3.0).unwrap();
        let st = h.job_state(&id).unwrap();
        assert_eq!(st.state, State::Done, "{name}");
        assert!(st.ended.unwrap() >= st.started.unwrap(), "{name}");
    }
}

#[test]
fn validation_errors() {
    for (name, h) in backends(4) {
        assert!(
            matches!(h.submit_job(sleep_job(8, 0.1, 2.0)), Err(ResourceError::OversizedJob { .. })),
            "{name}"
        );
        let mut jd = sleep_job(1, 0.1, 2.0);
        jd.queue_name = "debug".into();
        assert!(matches!(h.submit_job(jd), Err(ResourceError::UnknownQueue(_))), "{name}");
        assert!(
            matches!(
                h.submit_job(sleep_job(1, 0.1, 600.0)),
                Err(ResourceError::WalltimeExceedsQueueLimit { .. })
            ),
            "{name}"
        );
        assert!(matches!(h.job_state("missing"), Err(ResourceError::UnknownJob(_))), "{name}");
        assert_eq!(h.estimate_queue_wait(&sleep_job(1, 0.1, 2.0)).unwrap(), 0.0, "{name}");
    }
}

#[test]
fn cancel_queued_running_and_terminal() {
    for (name, h) in backends(1) {
        let first = h.submit_job(sleep_job(1, 5.0, 10.0)).unwrap();
        let second = h.submit_job(sleep_job(1, 0.1, 2.0)).unwrap();
        assert_eq!(h.job_state(&second).unwrap().state, State::Queued, "{name}");
        assert_eq!(h.queue_len().unwrap(), 1, "{name}");

        h.cancel_job(&second).unwrap();
        assert_eq!(h.job_state(&second).unwrap().state, State::Canceled, "{name}");
        assert_eq!(h.queue_len().unwrap(), 0, "{name}");

        h.cancel_job(&first).unwrap();
        assert_eq!(h.job_state(&first).unwrap().state, State::Canceled, "{name}");

        // freed core is usable again
        let third = h.submit_job(sleep_job(1, 0.1, 2.0)).unwrap();
        assert_eq!(h.job_state(&third).unwrap().state, State::Running, "{name}");
        let now = h.now().unwrap();
        h.step_queue(now + 3.0).unwrap();
        assert_eq!(h.job_state(&third).unwrap().state, State::Done, "{name}");
        assert!(
            matches!(
                h.cancel_job(&third),
                Err(ResourceError::State(StateError::IllegalTransition { .. }))
            ),
            "{name}"
        );
    }
}

#[test]
fn clones_share_one_backend() {
    for (name, h) in backends(2) {
        let other = h.clone();
        let id = h.submit_job(sleep_job(1, 0.1, 2.0)).unwrap();
        assert_eq!(other.job_state(&id).unwrap().state, State::Running, "{name}");
        let threads: Vec<_> = (0..4)
            .map(|_| {
                let h = h.clone();
                std::thread::spawn(move || h.submit_job(sleep_job(1, 0.1, 2.0)).unwrap())
            })
            .collect();
        let mut ids: Vec<String> = threads.into_iter().map(|t| t.join().unwrap()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 4, "{name}");
    }
}
