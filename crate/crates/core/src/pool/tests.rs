use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::engine::Event;
use crate::workload::{InputCatalog, PerfTable, StorageEndpoint, StorageTable};

fn regions(names: &[&str]) -> Vec<PoolRegion> {
    names
        .iter()
        .map(|n| PoolRegion { name: (*n).into(), provider: Provider::A, wan_latency: Duration::ZERO, has_collector: true })
        .collect()
}

fn workload(n_regions: u16) -> Workload {
    let mut storage = StorageTable::default();
    for r in 0..n_regions {
        storage.insert(StorageEndpoint { region: RegionIdx(r), read_bps: 1e10, write_bps: 1e10 });
    }
    Workload {
        perf: PerfTable::builtin(),
        catalog: InputCatalog { size_factor: 0.125, replicas: BTreeMap::new() },
        storage,
        jitter: 0.0,
        input_bytes: 0,
        output_bytes: 0,
    }
}

fn pool(names: &[&str], config: PoolConfig) -> Pool {
    Pool::new(config, regions(names))
}

fn small_config() -> PoolConfig {
    PoolConfig { gpu_schedds: 3, cpu_schedds: 2, leaves_per_region: 2, ..PoolConfig::default() }
}

fn handle(pool: &mut Pool, eng: &mut Engine, ev: &Event) {
    match (ev.kind, ev.target) {
        (EventKind::StartdHandshake, Target::Instance(i)) => pool.on_handshake(eng, i),
        (EventKind::SlotVisible, Target::Instance(i)) => {
            pool.on_slot_visible(i);
        }
        (EventKind::JobCompleted { attempt }, Target::Job(j)) => {
            pool.on_job_completed(eng, j, attempt);
        }
        _ => {}
    }
}

fn run(pool: &mut Pool, eng: &mut Engine, t: SimTime) {
    eng.schedule(t, EventKind::Marker { label: 0 }, Target::Engine).unwrap();
    eng.run_until(t, |eng, ev| handle(pool, eng, ev));
}

/// Registers `n` startds starting at instance id `first` and waits until
/// their ads are visible.
fn add_slots(pool: &mut Pool, eng: &mut Engine, first: u32, n: u32, region: RegionIdx, gpu: GpuModel) {
    for i in first..first + n {
        pool.register_startd(eng, InstanceId(i), region, gpu).unwrap();
    }
    let t = eng.now() + Duration::from_secs(30);
    run(pool, eng, t);
}

fn start_all(pool: &mut Pool, eng: &mut Engine, w: &Workload, matches: &[Match]) -> usize {
    matches.iter().filter(|m| pool.start_job(eng, w, m.job, m.instance).is_ok()).count()
}

#[test]
fn job_class_and_outcome_round_trip() {
    for c in [JobClass::Gpu, JobClass::Cpu] {
        assert_eq!(c.to_string().parse::<JobClass>().unwrap(), c);
    }
    for o in [JobOutcome::Completed, JobOutcome::Preempted, JobOutcome::Removed] {
        assert_eq!(o.to_string().parse::<JobOutcome>().unwrap(), o);
    }
    assert!("gpu".parse::<JobClass>().is_err());
}

#[test]
fn submission_checks_queue_kind() {
    let mut p = pool(&["r0"], small_config());
    let gpu = p.add_template(JobTemplate::gpu(InputClass::Standard, [], []));
    let cpu = p.add_template(JobTemplate::cpu());
    assert_eq!(p.submit_jobs(ScheddId(0), gpu, 5).unwrap(), 5);
    assert!(matches!(
        p.submit_jobs(ScheddId(0), cpu, 1),
        Err(PoolError::KindMismatch { job: JobClass::Cpu, queue: JobClass::Gpu })
    ));
    assert!(matches!(p.submit_jobs(ScheddId(99), gpu, 1), Err(PoolError::UnknownSchedd(_))));
    assert_eq!(p.submit_round_robin(gpu, 7), 7);
    let idle: Vec<usize> = p.schedds().iter().filter(|s| s.kind == JobClass::Gpu).map(Schedd::idle).collect();
    assert_eq!(idle, vec![5 + 3, 2, 2]);
    assert_eq!(p.submit_round_robin(cpu, 3), 3);
    assert_eq!(p.count(JobClass::Gpu, JobState::Idle), 12);
    assert_eq!(p.submitted(JobClass::Cpu), 3);
}

#[test]
fn ad_visible_after_handshake_and_forwarding() {
    let mut eng = Engine::new(1);
    let mut rs = regions(&["r0"]);
    rs[0].wan_latency = Duration::from_millis(300);
    let mut p = Pool::new(small_config(), rs);
    p.register_startd(&mut eng, InstanceId(0), RegionIdx(0), GpuModel::T4).unwrap();
    assert_eq!(p.ads_at_main(), 0);
    let mut visible_at = None;
    eng.run_until(SimTime::from_secs(10), |eng, ev| {
        handle(&mut p, eng, ev);
        if ev.kind == EventKind::SlotVisible {
            visible_at = Some(ev.at);
        }
    });
    assert_eq!(visible_at, Some(SimTime::from_millis(50 + 2000 + 300)));
    assert_eq!(p.ads_at_main(), 1);
    assert!(matches!(
        p.register_startd(&mut eng, InstanceId(0), RegionIdx(0), GpuModel::T4),
        Err(PoolError::AlreadyRegistered(InstanceId(0)))
    ));
}

#[test]
fn region_without_collector_rejects_startds() {
    let mut eng = Engine::new(1);
    let mut rs = regions(&["r0", "r1"]);
    rs[1].has_collector = false;
    let mut p = Pool::new(small_config(), rs);
    assert!(matches!(
        p.register_startd(&mut eng, InstanceId(0), RegionIdx(1), GpuModel::T4),
        Err(PoolError::NoLeafInRegion(RegionIdx(1)))
    ));
    assert!(matches!(
        p.register_startd(&mut eng, InstanceId(0), RegionIdx(7), GpuModel::T4),
        Err(PoolError::UnknownRegion(RegionIdx(7)))
    ));
}

#[test]
fn handshakes_queue_per_leaf() {
    let mut eng = Engine::new(1);
    let config = PoolConfig { leaves_per_region: 1, ..small_config() };
    let mut p = Pool::new(config, regions(&["r0"]));
    for i in 0..100 {
        p.register_startd(&mut eng, InstanceId(i), RegionIdx(0), GpuModel::T4).unwrap();
    }
    // one leaf, 100 handshakes of 50 ms: the last waits 4.95 s
    assert_eq!(p.collector().max_backlog(), Duration::from_millis(4950));
}

#[test]
fn negotiation_balances_schedds() {
    let mut eng = Engine::new(1);
    let w = workload(1);
    let mut p = pool(&["r0"], small_config());
    let t = p.add_template(JobTemplate::gpu(InputClass::Standard, [], []));
    p.submit_jobs(ScheddId(0), t, 20).unwrap();
    p.submit_jobs(ScheddId(1), t, 20).unwrap();
    p.submit_jobs(ScheddId(2), t, 2).unwrap();
    add_slots(&mut p, &mut eng, 0, 12, RegionIdx(0), GpuModel::T4);
    let m = p.negotiate(JobClass::Gpu);
    assert_eq!(m.len(), 12);
    assert_eq!(start_all(&mut p, &mut eng, &w, &m), 12);
    assert_eq!(p.schedd_running(JobClass::Gpu), vec![5, 5, 2]);
    // oldest job first, lowest instance first
    assert_eq!(m[0], Match { job: JobId(0), instance: InstanceId(0) });
    assert_eq!(m[1].job, JobId(20));
    assert_eq!(m[2].job, JobId(40));
}

#[test]
fn locality_and_model_requirements_are_respected() {
    let mut eng = Engine::new(1);
    let w = workload(2);
    let mut p = pool(&["r0", "r1"], small_config());
    let near = p.add_template(JobTemplate::gpu(InputClass::Standard, [RegionIdx(1)], [GpuModel::T4]));
    p.submit_round_robin(near, 30);
    add_slots(&mut p, &mut eng, 0, 10, RegionIdx(0), GpuModel::T4);
    add_slots(&mut p, &mut eng, 10, 5, RegionIdx(1), GpuModel::K80);
    add_slots(&mut p, &mut eng, 15, 4, RegionIdx(1), GpuModel::T4);
    let m = p.negotiate(JobClass::Gpu);
    assert_eq!(m.len(), 4);
    assert!(m.iter().all(|x| x.instance.0 >= 15));
    start_all(&mut p, &mut eng, &w, &m);
    // a forced mismatch is refused and leaves the job idle
    let idle = p.jobs().iter().find(|j| j.state == JobState::Idle).unwrap().id;
    assert!(matches!(
        p.start_job(&mut eng, &w, idle, InstanceId(0)),
        Err(PoolError::LocalityViolation { instance: InstanceId(0), .. })
    ));
    assert_eq!(p.job(idle).unwrap().state, JobState::Idle);
    assert_eq!(p.negotiate(JobClass::Gpu).len(), 0);
}

#[test]
fn prefetch_bug_serves_a_single_region() {
    let mut eng = Engine::new(1);
    let config = PoolConfig { prefetch_bug: true, ..small_config() };
    let mut p = pool(&["zeta", "alpha", "mid"], config);
    let t = p.add_template(JobTemplate::gpu(InputClass::Standard, [], []));
    p.submit_round_robin(t, 100);
    add_slots(&mut p, &mut eng, 0, 5, RegionIdx(0), GpuModel::T4);
    add_slots(&mut p, &mut eng, 5, 5, RegionIdx(1), GpuModel::T4);
    add_slots(&mut p, &mut eng, 10, 5, RegionIdx(2), GpuModel::V100);
    let m = p.negotiate(JobClass::Gpu);
    assert_eq!(m.len(), 5);
    assert!(m.iter().all(|x| p.slot(x.instance).unwrap().region == RegionIdx(1)));

    let mut fixed = pool(&["zeta", "alpha", "mid"], small_config());
    let t = fixed.add_template(JobTemplate::gpu(InputClass::Standard, [], []));
    fixed.submit_round_robin(t, 100);
    add_slots(&mut fixed, &mut eng, 0, 15, RegionIdx(0), GpuModel::T4);
    assert_eq!(fixed.negotiate(JobClass::Gpu).len(), 15);
}

#[test]
fn schedd_cap_limits_running_jobs() {
    let mut eng = Engine::new(1);
    let w = workload(1);
    let config = PoolConfig { gpu_schedds: 1, schedd_cap: 3, ..small_config() };
    let mut p = pool(&["r0"], config);
    let t = p.add_template(JobTemplate::gpu(InputClass::Standard, [], []));
    p.submit_round_robin(t, 10);
    add_slots(&mut p, &mut eng, 0, 10, RegionIdx(0), GpuModel::T4);
    let m = p.negotiate(JobClass::Gpu);
    assert_eq!(m.len(), 3);
    start_all(&mut p, &mut eng, &w, &m);
    let idle = p.jobs().iter().find(|j| j.state == JobState::Idle).unwrap().id;
    assert!(matches!(p.start_job(&mut eng, &w, idle, InstanceId(9)), Err(PoolError::CapExceeded(ScheddId(0)))));
    assert_eq!(p.job(idle).unwrap().state, JobState::Idle);
    assert_eq!(p.stats().max_running_per_schedd, 3);
    assert!(p.negotiate(JobClass::Gpu).is_empty());
}

#[test]
fn job_runtime_and_completion() {
    let mut eng = Engine::new(1);
    let w = workload(1);
    let mut p = pool(&["r0"], small_config());
    let t = p.add_template(JobTemplate::gpu(InputClass::Small, [], []));
    p.submit_jobs(ScheddId(0), t, 2).unwrap();
    add_slots(&mut p, &mut eng, 0, 1, RegionIdx(0), GpuModel::T4);
    let start = eng.now();
    let claim = p.start_job(&mut eng, &w, JobId(0), InstanceId(0)).unwrap();
    // T4 Standard is 50 min; Small is an eighth of that
    assert_eq!(claim.completes_at, Some(start + Duration::from_secs(375)));
    assert!(matches!(p.start_job(&mut eng, &w, JobId(0), InstanceId(0)), Err(PoolError::NotIdle(JobId(0)))));
    assert!(matches!(p.start_job(&mut eng, &w, JobId(1), InstanceId(0)), Err(PoolError::SlotVanished(InstanceId(0)))));
    run(&mut p, &mut eng, start + Duration::from_secs(375));
    assert_eq!(p.job(JobId(0)).unwrap().state, JobState::Completed);
    assert_eq!(p.slot(InstanceId(0)).unwrap().state, SlotState::Unclaimed);
    let m = p.negotiate(JobClass::Gpu);
    assert_eq!(m, vec![Match { job: JobId(1), instance: InstanceId(0) }]);
}

#[test]
fn cpu_slots_open_once_gpu_is_claimed() {
    let mut eng = Engine::new(1);
    let w = workload(1);
    let mut p = pool(&["r0"], small_config());
    let g = p.add_template(JobTemplate::gpu(InputClass::Standard, [], []));
    let c = p.add_template(JobTemplate::cpu());
    p.submit_round_robin(c, 10);
    add_slots(&mut p, &mut eng, 0, 2, RegionIdx(0), GpuModel::V100);
    assert!(p.negotiate(JobClass::Cpu).is_empty());
    p.submit_jobs(ScheddId(0), g, 1).unwrap();
    let m = p.negotiate(JobClass::Gpu);
    start_all(&mut p, &mut eng, &w, &m);
    let m = p.negotiate(JobClass::Cpu);
    assert_eq!(m.len(), 2);
    assert!(m.iter().all(|x| x.instance == InstanceId(0)));
    assert_eq!(start_all(&mut p, &mut eng, &w, &m), 2);
    assert_eq!(p.schedd_running(JobClass::Cpu), vec![1, 1]);
    assert!(p.negotiate(JobClass::Cpu).is_empty());
}

#[test]
fn lost_instance_requeues_its_jobs() {
    let mut eng = Engine::new(1);
    let w = workload(1);
    let mut p = pool(&["r0"], small_config());
    let g = p.add_template(JobTemplate::gpu(InputClass::Standard, [], []));
    let c = p.add_template(JobTemplate::cpu());
    p.submit_jobs(ScheddId(0), g, 1).unwrap();
    p.submit_round_robin(c, 2);
    add_slots(&mut p, &mut eng, 0, 2, RegionIdx(0), GpuModel::P100);
    let m = p.negotiate_cycle();
    start_all(&mut p, &mut eng, &w, &m);
    let m = p.negotiate(JobClass::Cpu);
    start_all(&mut p, &mut eng, &w, &m);
    assert_eq!(p.count(JobClass::Cpu, JobState::Running), 2);
    assert_eq!(p.remove_startd(&mut eng, InstanceId(0)), 3);
    assert_eq!(p.ads_at_main(), 1);
    assert_eq!(p.count(JobClass::Gpu, JobState::Idle), 1);
    assert_eq!(p.count(JobClass::Cpu, JobState::Idle), 2);
    assert!(p.schedds().iter().all(|s| s.running == 0));
    assert_eq!(p.remove_startd(&mut eng, InstanceId(0)), 0);
    // the stale completion of the first attempt is ignored after a restart
    let m = p.negotiate(JobClass::Gpu);
    assert_eq!(m, vec![Match { job: JobId(0), instance: InstanceId(1) }]);
    start_all(&mut p, &mut eng, &w, &m);
    assert_eq!(p.job(JobId(0)).unwrap().attempt, 2);
    assert!(p.on_job_completed(&mut eng, JobId(0), 1).is_none());
    assert_eq!(p.job(JobId(0)).unwrap().state, JobState::Running);
}

#[test]
fn removal_and_shutdown_drain() {
    let mut eng = Engine::new(1);
    let w = workload(1);
    let mut p = pool(&["r0"], small_config());
    let g = p.add_template(JobTemplate::gpu(InputClass::Standard, [], []));
    let c = p.add_template(JobTemplate::cpu());
    p.submit_round_robin(g, 5);
    p.submit_round_robin(c, 6);
    add_slots(&mut p, &mut eng, 0, 3, RegionIdx(0), GpuModel::V100);
    let m = p.negotiate(JobClass::Gpu);
    start_all(&mut p, &mut eng, &w, &m);
    let m = p.negotiate(JobClass::Cpu);
    start_all(&mut p, &mut eng, &w, &m);
    assert_eq!(p.remove_idle_jobs(&mut eng, JobClass::Gpu), 2);
    assert_eq!(p.count(JobClass::Gpu, JobState::Removed), 2);
    assert!(eng.trace().records().iter().any(|e| matches!(e.kind, EventKind::JobsRemoved { class: JobClass::Gpu, count: 2 })));
    assert_eq!(p.remove_idle_jobs(&mut eng, JobClass::Gpu), 0);

    add_slots(&mut p, &mut eng, 3, 1, RegionIdx(0), GpuModel::V100);
    assert_eq!(p.begin_shutdown(), vec![InstanceId(3)]);
    assert!(p.negotiate_cycle().is_empty());
    // a slot that shows up during shutdown is drained at once
    p.register_startd(&mut eng, InstanceId(4), RegionIdx(0), GpuModel::V100).unwrap();
    let mut drained = Vec::new();
    let mut deprovision = Vec::new();
    eng.run_until(SimTime::from_secs(7200), |eng, ev| match (ev.kind, ev.target) {
        (EventKind::SlotVisible, Target::Instance(i)) => {
            if p.on_slot_visible(i) {
                drained.push(i);
            }
        }
        (EventKind::JobCompleted { attempt }, Target::Job(j)) => {
            let d = p.on_job_completed(eng, j, attempt).unwrap();
            assert!(d.completed_gpu.is_some());
            deprovision.extend(d.deprovision);
        }
        (EventKind::StartdHandshake, Target::Instance(i)) => p.on_handshake(eng, i),
        _ => {}
    });
    assert_eq!(drained, vec![InstanceId(4)]);
    deprovision.sort();
    assert_eq!(deprovision, vec![InstanceId(0), InstanceId(1), InstanceId(2)]);
    assert_eq!(p.count(JobClass::Gpu, JobState::Completed), 3);
    assert_eq!(p.count(JobClass::Cpu, JobState::Removed), 6);
    assert_eq!(p.count(JobClass::Cpu, JobState::Running), 0);
}

#[test]
fn registration_burst_stays_below_a_minute_of_backlog() {
    let mut eng = Engine::new(9);
    let names: Vec<String> = (0..8).map(|i| format!("r{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut p = pool(&refs, PoolConfig::default());
    // 10k registrations spread uniformly over 60 s
    let mut rng = eng.rng(crate::rng::StreamKey::new("burst", 0));
    let mut arrivals: Vec<(u64, u16)> = (0..10_000).map(|_| (u64::from(rng.below(60_000)), rng.below(8) as u16)).collect();
    arrivals.sort();
    for (i, (ms, r)) in arrivals.into_iter().enumerate() {
        let t = SimTime::from_millis(ms);
        run(&mut p, &mut eng, t);
        p.register_startd(&mut eng, InstanceId(i as u32), RegionIdx(r), GpuModel::T4).unwrap();
    }
    run(&mut p, &mut eng, SimTime::from_secs(600));
    assert_eq!(p.ads_at_main(), 10_000);
    assert!(p.collector().max_backlog() < Duration::from_secs(60));
}

#[derive(Debug, Clone)]
enum Op {
    Submit(bool, u8),
    Register(u8),
    Negotiate,
    Lose(u8),
    Advance(u16),
    RemoveIdle(bool),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (any::<bool>(), 1u8..30).prop_map(|(g, n)| Op::Submit(g, n)),
        (1u8..10).prop_map(Op::Register),
        Just(Op::Negotiate),
        any::<u8>().prop_map(Op::Lose),
        (1u16..4000).prop_map(Op::Advance),
        any::<bool>().prop_map(Op::RemoveIdle),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jobs_are_conserved(ops in proptest::collection::vec(op(), 1..80), cap in 1u32..20) {
        let mut eng = Engine::new(3);
        let w = workload(2);
        let config = PoolConfig { schedd_cap: cap, ..small_config() };
        let mut p = pool(&["r0", "r1"], config);
        let std_t = p.add_template(JobTemplate::gpu(InputClass::Standard, [RegionIdx(0)], []));
        let small_t = p.add_template(JobTemplate::gpu(InputClass::Small, [RegionIdx(1)], [GpuModel::K80]));
        let cpu_t = p.add_template(JobTemplate::cpu());
        let mut next = 0u32;
        for op in ops {
            match op {
                Op::Submit(gpu, n) => {
                    if gpu {
                        p.submit_round_robin(if n % 2 == 0 { std_t } else { small_t }, u32::from(n));
                    } else {
                        p.submit_round_robin(cpu_t, u32::from(n));
                    }
                }
                Op::Register(n) => {
                    for k in 0..n {
                        let (r, g) = if k % 2 == 0 { (RegionIdx(0), GpuModel::V100) } else { (RegionIdx(1), GpuModel::K80) };
                        p.register_startd(&mut eng, InstanceId(next), r, g).unwrap();
                        next += 1;
                    }
                }
                Op::Negotiate => {
                    let m = p.negotiate(JobClass::Gpu);
                    start_all(&mut p, &mut eng, &w, &m);
                    let m = p.negotiate(JobClass::Cpu);
                    start_all(&mut p, &mut eng, &w, &m);
                }
                Op::Lose(k) if next > 0 => {
                    p.remove_startd(&mut eng, InstanceId(u32::from(k) % next));
                }
                Op::Advance(s) => {
                    let t = eng.now() + Duration::from_secs(u64::from(s));
                    run(&mut p, &mut eng, t);
                }
                Op::RemoveIdle(gpu) => {
                    p.remove_idle_jobs(&mut eng, if gpu { JobClass::Gpu } else { JobClass::Cpu });
                }
                _ => {}
            }
            for class in [JobClass::Gpu, JobClass::Cpu] {
                let total: u64 = [JobState::Idle, JobState::Running, JobState::Completed, JobState::Removed]
                    .into_iter()
                    .map(|s| p.count(class, s))
                    .sum();
                prop_assert_eq!(total, p.submitted(class));
                prop_assert_eq!(p.count(class, JobState::PreemptedRequeued), 0);
                let running: u32 = p.schedd_running(class).iter().sum();
                prop_assert_eq!(u64::from(running), p.count(class, JobState::Running));
            }
            prop_assert!(p.schedds().iter().all(|s| s.running <= cap));
            prop_assert_eq!(p.stats().locality_violations, 0);
            for j in p.jobs().iter().filter(|j| j.state == JobState::Running) {
                let slot = p.slot(j.instance.unwrap()).unwrap();
                prop_assert!(p.template(j.template).admits(slot.region, slot.gpu));
            }
            let visible = (0..next).filter(|&i| p.slot(InstanceId(i)).is_some_and(|s| s.visible)).count();
            prop_assert_eq!(visible, p.ads_at_main());
        }
    }
}
