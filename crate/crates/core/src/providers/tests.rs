use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::engine::Event;

const A: RegionIdx = RegionIdx(0);
const B: RegionIdx = RegionIdx(1);
const C: RegionIdx = RegionIdx(2);

fn region(name: &str, provider: Provider, quota: u32, boot: BootDelay) -> Region {
    Region {
        name: name.into(),
        provider,
        geo: "north-america".into(),
        quota: GpuModel::ALL.into_iter().map(|g| (g, quota)).collect::<BTreeMap<_, _>>(),
        boot,
        wan_latency_s: 0.0,
    }
}

fn cloud_with(quota: u32, boot: BootDelay, faults: Vec<FaultSpec>) -> Cloud {
    Cloud::new(
        vec![
            region("a-us-1", Provider::A, quota, boot),
            region("b-us-1", Provider::B, quota, boot),
            region("c-us-1", Provider::C, quota, boot),
        ],
        faults,
    )
}

fn cloud(quota: u32) -> Cloud {
    cloud_with(quota, BootDelay::fixed(120.0), Vec::new())
}

fn handle(cloud: &mut Cloud, eng: &mut Engine, ev: &Event) {
    match (ev.kind, ev.target) {
        (EventKind::InstanceBooted, Target::Instance(i)) => {
            cloud.on_booted(eng, i).unwrap();
        }
        (EventKind::InstancePreempted { epoch }, Target::Instance(i)) => {
            cloud.on_preempted(eng, i, epoch).unwrap();
        }
        _ => {}
    }
}

/// Runs provider events up to `t` and leaves the clock at exactly `t`.
fn advance(cloud: &mut Cloud, eng: &mut Engine, t: SimTime) {
    eng.schedule(t, EventKind::Marker { label: 0 }, Target::Engine).unwrap();
    eng.run_until(t, |eng, ev| handle(cloud, eng, ev));
    assert_eq!(eng.now(), t);
}

fn hours(h: f64) -> SimTime {
    SimTime::from_secs_f64(h * 3600.0)
}

fn billed_secs(cloud: &Cloud, id: InstanceId) -> f64 {
    cloud.billing().iter().filter(|b| b.instance == id).map(|b| (b.end - b.start).as_secs_f64()).sum()
}

#[test]
fn fleet_is_clamped_by_quota() {
    let mut eng = Engine::new(1);
    let mut c = cloud(300);
    let fleet = c.create_fleet(&mut eng, A, &[GpuModel::V100], 500).unwrap();
    let g = c.group(fleet.group()).unwrap();
    assert_eq!(g.members.len(), 300);
    assert_eq!(c.quota_used(A, GpuModel::V100), 300);
    let unfulfilled: Vec<_> = c.audit().iter().filter(|a| a.action == "unfulfilled").collect();
    assert_eq!(unfulfilled.len(), 1);
    assert_eq!(unfulfilled[0].count, 200);
    // quota exhausted: a second fleet gets nothing
    let f2 = c.create_fleet(&mut eng, A, &[GpuModel::V100], 10).unwrap();
    assert!(c.group(f2.group()).unwrap().members.is_empty());
}

#[test]
fn fleet_template_must_name_one_model() {
    let mut eng = Engine::new(1);
    let mut c = cloud(10);
    assert_eq!(
        c.create_fleet(&mut eng, A, &[GpuModel::V100, GpuModel::T4], 5).unwrap_err(),
        ProviderError::MixedGpuTemplate(2)
    );
    assert_eq!(c.create_fleet(&mut eng, A, &[], 5).unwrap_err(), ProviderError::MixedGpuTemplate(0));
    // repeated model is still a single-model template
    assert!(c.create_fleet(&mut eng, A, &[GpuModel::T4, GpuModel::T4], 5).is_ok());
}

#[test]
fn flavors_are_per_provider() {
    let mut eng = Engine::new(1);
    let mut c = cloud(10);
    assert!(matches!(
        c.create_scale_set(A, GpuModel::V100, 10),
        Err(ProviderError::FlavorNotOffered { .. })
    ));
    assert!(matches!(
        c.create_fleet(&mut eng, B, &[GpuModel::V100], 1),
        Err(ProviderError::FlavorNotOffered { .. })
    ));
    assert!(matches!(c.create_instance_group(B, GpuModel::V100), Err(ProviderError::FlavorNotOffered { .. })));
    assert_eq!(c.create_fleet(&mut eng, RegionIdx(9), &[GpuModel::V100], 1).unwrap_err(), ProviderError::UnknownRegion(RegionIdx(9)));
    let ig = c.create_instance_group(C, GpuModel::T4).unwrap();
    assert_eq!(c.scale_set(ig.group()).unwrap_err(), ProviderError::NotAScaleSet(ig.group()));
}

#[test]
fn scale_set_resize() {
    let mut eng = Engine::new(1);
    let mut c = cloud(5000);
    let set = c.create_scale_set(B, GpuModel::V100, 1000).unwrap();
    assert_eq!(c.resize_scale_set(&mut eng, set, 50).unwrap(), 50);
    assert_eq!(c.resize_scale_set(&mut eng, set, 50).unwrap(), 0);
    assert_eq!(
        c.resize_scale_set(&mut eng, set, 1001).unwrap_err(),
        ProviderError::ExceedsMaxSize { requested: 1001, max: 1000 }
    );
    // shrinking marks surplus but keeps everything allocated
    assert_eq!(c.resize_scale_set(&mut eng, set, 40).unwrap(), -10);
    assert_eq!(c.group(set.group()).unwrap().members.len(), 50);
    assert_eq!(c.quota_used(B, GpuModel::V100), 50);
    // growing again reuses the marked members first
    assert_eq!(c.resize_scale_set(&mut eng, set, 55).unwrap(), 5);
    assert_eq!(c.group(set.group()).unwrap().members.len(), 55);
    assert!(c.instances().iter().all(|i| !i.surplus));
}

#[test]
fn fixed_boot_delay() {
    let mut eng = Engine::new(1);
    let mut c = cloud(10);
    let fleet = c.create_fleet(&mut eng, A, &[GpuModel::T4], 1).unwrap();
    let id = *c.group(fleet.group()).unwrap().members.first().unwrap();
    assert_eq!(c.instance(id).unwrap().state, InstanceState::Booting);
    advance(&mut c, &mut eng, SimTime::from_millis(119_999));
    assert_eq!(c.instance(id).unwrap().state, InstanceState::Booting);
    advance(&mut c, &mut eng, SimTime::from_secs(120));
    assert_eq!(c.instance(id).unwrap().state, InstanceState::Running);
    assert_eq!(c.running_total(), 1);
}

#[test]
fn lognormal_boot_delay_has_requested_median() {
    let mut eng = Engine::new(3);
    let mut c = cloud_with(2000, BootDelay::default(), Vec::new());
    c.create_fleet(&mut eng, A, &[GpuModel::K80], 2000).unwrap();
    let mut boots = Vec::new();
    eng.run_until(SimTime::from_secs(3600), |eng, ev| {
        if let (EventKind::InstanceBooted, Target::Instance(i)) = (ev.kind, ev.target) {
            c.on_booted(eng, i).unwrap();
            boots.push(ev.at.as_secs_f64());
        }
    });
    boots.sort_by(f64::total_cmp);
    let median = boots[boots.len() / 2];
    assert!((median - 90.0).abs() < 6.0, "median {median}");
}

#[test]
fn stopped_scale_set_member_keeps_billing_until_deallocated() {
    let mut eng = Engine::new(1);
    let mut c = cloud(10);
    let set = c.create_scale_set(B, GpuModel::P100, 10).unwrap();
    c.resize_scale_set(&mut eng, set, 1).unwrap();
    let id = *c.group(set.group()).unwrap().members.first().unwrap();
    advance(&mut c, &mut eng, SimTime::from_secs(120));
    assert_eq!(c.system_shutdown(&mut eng, id).unwrap(), InstanceState::Stopped);
    assert!(c.instance(id).unwrap().state.billable());
    assert_eq!(c.quota_used(B, GpuModel::P100), 1);
    let stop_at = eng.now();
    advance(&mut c, &mut eng, stop_at + Duration::from_secs(3600));
    c.deallocate_instance(&mut eng, set, id).unwrap();
    assert_eq!(c.instance(id).unwrap().state, InstanceState::Deallocated);
    assert_eq!(c.quota_used(B, GpuModel::P100), 0);
    // boot (120 s) + one stopped hour
    assert!((billed_secs(&c, id) - 3720.0).abs() < 1e-9);
    // nothing accrues afterwards
    advance(&mut c, &mut eng, hours(3.0));
    assert!((c.billable_seconds(eng.now()) - 3720.0).abs() < 1e-9);
    assert_eq!(c.deallocate_instance(&mut eng, set, id).unwrap_err(), ProviderError::UnknownInstance(id));
}

#[test]
fn stopped_member_can_restart() {
    let mut eng = Engine::new(1);
    let mut c = cloud(10);
    let set = c.create_scale_set(B, GpuModel::P100, 10).unwrap();
    c.resize_scale_set(&mut eng, set, 1).unwrap();
    let id = *c.group(set.group()).unwrap().members.first().unwrap();
    advance(&mut c, &mut eng, SimTime::from_secs(120));
    c.system_shutdown(&mut eng, id).unwrap();
    assert_eq!(c.running_total(), 0);
    c.start_stopped(&mut eng, id).unwrap();
    assert_eq!(c.instance(id).unwrap().state, InstanceState::Running);
    assert_eq!(c.instance(id).unwrap().epoch, 2);
    assert_eq!(c.running_total(), 1);
}

#[test]
fn fleet_member_terminates_on_os_shutdown() {
    let mut eng = Engine::new(1);
    let mut c = cloud(10);
    let fleet = c.create_fleet(&mut eng, A, &[GpuModel::M60], 2).unwrap();
    advance(&mut c, &mut eng, SimTime::from_secs(120));
    let id = *c.group(fleet.group()).unwrap().members.first().unwrap();
    assert_eq!(c.system_shutdown(&mut eng, id).unwrap(), InstanceState::Terminated);
    assert_eq!(c.quota_used(A, GpuModel::M60), 1);
    assert!(matches!(c.system_shutdown(&mut eng, id), Err(ProviderError::IllegalTransition { .. })));
    // fleets never replace
    c.provider_tick(&mut eng);
    assert_eq!(c.instances().len(), 2);
}

fn respawn(per_call: u32) -> FaultSpec {
    FaultSpec {
        kind: FaultKind::DeprovisionRespawnBug { rogue_per_call: per_call },
        regions: vec![],
        start: SimTime::ZERO,
        end: hours(10.0),
    }
}

#[test]
fn deallocation_respawns_a_rogue_under_fault() {
    let mut eng = Engine::new(1);
    let mut c = cloud_with(10, BootDelay::fixed(120.0), vec![respawn(1)]);
    let set = c.create_scale_set(B, GpuModel::V100, 10).unwrap();
    c.resize_scale_set(&mut eng, set, 1).unwrap();
    let id = *c.group(set.group()).unwrap().members.first().unwrap();
    advance(&mut c, &mut eng, SimTime::from_secs(120));
    c.deallocate_instance(&mut eng, set, id).unwrap();
    let rogues: Vec<_> = c.instances().iter().filter(|i| i.rogue).collect();
    assert_eq!(rogues.len(), 1);
    assert_eq!(rogues[0].group, None);
    assert_eq!(rogues[0].state, InstanceState::Booting);
    assert_eq!(c.quota_used(B, GpuModel::V100), 1);
    assert_eq!(c.live_count(B, GpuModel::V100), 0);
    advance(&mut c, &mut eng, SimTime::from_secs(240));
    // rogues run but are not part of the pool's capacity
    assert_eq!(c.running_total(), 0);
    assert_eq!(c.billable_count(), 1);
}

#[test]
fn sweep_terminates_rogues_and_keeps_their_cost() {
    let mut eng = Engine::new(1);
    let mut c = cloud_with(10, BootDelay::fixed(0.0), vec![respawn(1)]);
    let ig = c.create_instance_group(C, GpuModel::K80).unwrap();
    c.set_instance_group_size(&mut eng, ig, 1).unwrap();
    let id = *c.group(ig.group()).unwrap().members.first().unwrap();
    advance(&mut c, &mut eng, SimTime::from_secs(60));
    c.delete_group_instance(&mut eng, ig, id).unwrap();
    let rogue = c.instances().iter().find(|i| i.rogue).unwrap().id;
    advance(&mut c, &mut eng, SimTime::from_secs(60) + Duration::from_secs(5400));
    assert_eq!(c.manual_sweep(&mut eng, C).unwrap(), 1);
    assert_eq!(c.instance(rogue).unwrap().state, InstanceState::Terminated);
    assert!((billed_secs(&c, rogue) - 5400.0).abs() < 1e-9);
    assert_eq!(c.manual_sweep(&mut eng, C).unwrap(), 0);
    assert!((billed_secs(&c, rogue) - 5400.0).abs() < 1e-9);
    assert_eq!(c.quota_used(C, GpuModel::K80), 0);
}

#[test]
fn respawn_is_clamped_by_quota() {
    let mut eng = Engine::new(1);
    let mut c = cloud_with(1, BootDelay::fixed(0.0), vec![respawn(3)]);
    let set = c.create_scale_set(B, GpuModel::V100, 10).unwrap();
    c.resize_scale_set(&mut eng, set, 1).unwrap();
    let id = *c.group(set.group()).unwrap().members.first().unwrap();
    advance(&mut c, &mut eng, SimTime::from_secs(1));
    c.deallocate_instance(&mut eng, set, id).unwrap();
    assert_eq!(c.instances().iter().filter(|i| i.rogue).count(), 1);
}

#[test]
fn instance_group_delete_is_not_replaced() {
    let mut eng = Engine::new(1);
    let mut c = cloud(10);
    let ig = c.create_instance_group(C, GpuModel::T4).unwrap();
    assert_eq!(c.set_instance_group_size(&mut eng, ig, 3).unwrap(), 3);
    advance(&mut c, &mut eng, SimTime::from_secs(120));
    let id = *c.group(ig.group()).unwrap().members.first().unwrap();
    c.delete_group_instance(&mut eng, ig, id).unwrap();
    assert_eq!(c.group(ig.group()).unwrap().desired, 2);
    c.provider_tick(&mut eng);
    advance(&mut c, &mut eng, SimTime::from_secs(600));
    assert_eq!(c.group(ig.group()).unwrap().members.len(), 2);
    assert_eq!(c.instances().len(), 3);
    assert_eq!(c.delete_group_instance(&mut eng, ig, id).unwrap_err(), ProviderError::UnknownInstance(id));
}

#[test]
fn lowering_instance_group_size_never_kills() {
    let mut eng = Engine::new(1);
    let mut c = cloud(10);
    let ig = c.create_instance_group(C, GpuModel::T4).unwrap();
    c.set_instance_group_size(&mut eng, ig, 4).unwrap();
    advance(&mut c, &mut eng, SimTime::from_secs(120));
    assert_eq!(c.set_instance_group_size(&mut eng, ig, 0).unwrap(), 0);
    assert_eq!(c.running_total(), 4);
}

fn preemption(rate: f64, end_h: f64) -> FaultSpec {
    FaultSpec { kind: FaultKind::Preemption { rate_per_hour: rate }, regions: vec![], start: SimTime::ZERO, end: hours(end_h) }
}

#[test]
fn preempted_member_is_replaced_with_next_generation() {
    let mut eng = Engine::new(2);
    let mut c = cloud_with(50, BootDelay::fixed(60.0), vec![preemption(5.0, 1.0)]);
    let ig = c.create_instance_group(C, GpuModel::P4).unwrap();
    c.set_instance_group_size(&mut eng, ig, 10).unwrap();
    let mut t = SimTime::ZERO;
    for _ in 0..30 {
        t = t + Duration::from_secs(60);
        advance(&mut c, &mut eng, t);
        c.provider_tick(&mut eng);
    }
    assert!(c.preemptions() > 0);
    let g = c.group(ig.group()).unwrap();
    assert_eq!(g.members.len() + g.pending_replacements.len(), 10);
    assert!(c.instances().iter().any(|i| i.generation >= 1));
    assert!(c.audit().iter().any(|a| a.action == "replace"));
}

/// Runs an instance group under heavy preemption with a replacement check
/// every `tick` and returns the highest generation reached and the final
/// membership.
fn churn(rate: f64, tick_s: u64, horizon_h: f64) -> (u32, usize) {
    let mut eng = Engine::new(11);
    let mut c = cloud_with(1000, BootDelay::fixed(90.0), vec![preemption(rate, horizon_h)]);
    let ig = c.create_instance_group(C, GpuModel::T4).unwrap();
    c.set_instance_group_size(&mut eng, ig, 20).unwrap();
    let mut t = SimTime::ZERO;
    while t < hours(horizon_h) {
        t = t + Duration::from_secs(tick_s);
        advance(&mut c, &mut eng, t);
        c.provider_tick(&mut eng);
    }
    let g = c.group(ig.group()).unwrap();
    (c.instances().iter().map(|i| i.generation).max().unwrap(), g.members.len())
}

#[test]
fn instance_group_churn() {
    // mild preemption: the group stays at size within a few generations
    let (generation, members) = churn(0.02, 60, 2.0);
    assert!(generation <= 2, "{generation}");
    assert_eq!(members, 20);
    // revocations faster than boots: replacements never settle
    let (generation, _) = churn(120.0, 60, 2.0);
    assert!(generation > 10, "{generation}");
}

#[test]
fn preemption_rate_matches_hazard() {
    let mut eng = Engine::new(5);
    let mut c = cloud_with(10_000, BootDelay::fixed(0.0), vec![preemption(0.02, 1.0)]);
    c.create_fleet(&mut eng, A, &[GpuModel::K80], 10_000).unwrap();
    advance(&mut c, &mut eng, hours(1.0));
    // 10k instance-hours at 2%/h: about 200, sd about 14
    let n = c.preemptions();
    assert!((150..=250).contains(&n), "{n}");
    assert_eq!(c.running_total() as u64, 10_000 - n);
}

#[test]
fn stale_preemption_is_ignored() {
    let mut eng = Engine::new(1);
    let mut c = cloud(10);
    c.create_fleet(&mut eng, A, &[GpuModel::K80], 1).unwrap();
    let id = InstanceId(0);
    advance(&mut c, &mut eng, SimTime::from_secs(120));
    assert!(!c.on_preempted(&mut eng, id, 7).unwrap());
    assert!(c.on_preempted(&mut eng, id, 1).unwrap());
    assert!(!c.on_preempted(&mut eng, id, 1).unwrap());
    assert_eq!(c.preemptions(), 1);
}

#[test]
fn metadata_only_while_provisioned() {
    let mut eng = Engine::new(1);
    let mut c = cloud(10);
    let ig = c.create_instance_group(C, GpuModel::T4).unwrap();
    c.set_instance_group_size(&mut eng, ig, 1).unwrap();
    let id = InstanceId(0);
    assert_eq!(
        c.query_metadata(id).unwrap(),
        MetadataRecord { instance: id, provider: Provider::C, region: C }
    );
    advance(&mut c, &mut eng, SimTime::from_secs(120));
    assert!(c.query_metadata(id).is_ok());
    c.delete_group_instance(&mut eng, ig, id).unwrap();
    assert_eq!(c.query_metadata(id).unwrap_err(), ProviderError::NotProvisioned(id));
    assert_eq!(c.query_metadata(InstanceId(99)).unwrap_err(), ProviderError::NotProvisioned(InstanceId(99)));
}

fn stall(fraction: f64, end_s: u64) -> FaultSpec {
    FaultSpec {
        kind: FaultKind::RegionalLimitStall { fraction },
        regions: vec![A],
        start: SimTime::ZERO,
        end: SimTime::from_secs(end_s),
    }
}

#[test]
fn stalled_requests_wait_for_recovery() {
    let mut eng = Engine::new(1);
    let mut c = cloud_with(100, BootDelay::fixed(120.0), vec![stall(1.0, 3600)]);
    c.create_fleet(&mut eng, A, &[GpuModel::V100], 10).unwrap();
    assert!(c.instances().iter().all(|i| i.state == InstanceState::Requested && i.frozen));
    // requests hold quota but are not billed
    assert_eq!(c.quota_used(A, GpuModel::V100), 10);
    assert_eq!(c.billable_count(), 0);
    advance(&mut c, &mut eng, SimTime::from_secs(1800));
    c.provider_tick(&mut eng);
    assert_eq!(c.running_total(), 0);
    assert_eq!(c.manual_recovery(&mut eng, A).unwrap(), 10);
    advance(&mut c, &mut eng, SimTime::from_secs(1920));
    assert_eq!(c.running_total(), 10);
    // other regions were never affected
    let ig = c.create_instance_group(C, GpuModel::V100).unwrap();
    c.set_instance_group_size(&mut eng, ig, 1).unwrap();
    assert_eq!(c.instances().last().unwrap().state, InstanceState::Booting);
}

#[test]
fn stall_window_end_releases_requests() {
    let mut eng = Engine::new(4);
    let mut c = cloud_with(1000, BootDelay::fixed(120.0), vec![stall(0.5, 600)]);
    c.create_fleet(&mut eng, A, &[GpuModel::V100], 1000).unwrap();
    let frozen = c.instances().iter().filter(|i| i.frozen).count();
    assert!((400..=600).contains(&frozen), "{frozen}");
    advance(&mut c, &mut eng, SimTime::from_secs(601));
    c.provider_tick(&mut eng);
    assert!(c.instances().iter().all(|i| !i.frozen && i.state != InstanceState::Requested));
}

#[test]
fn frozen_requests_can_be_cancelled() {
    let mut eng = Engine::new(1);
    let mut c = cloud_with(100, BootDelay::fixed(120.0), vec![stall(1.0, 3600)]);
    c.create_fleet(&mut eng, A, &[GpuModel::V100], 5).unwrap();
    assert_eq!(c.cancel_frozen(&mut eng), 5);
    assert_eq!(c.quota_used(A, GpuModel::V100), 0);
    assert_eq!(c.billable_seconds(eng.now()), 0.0);
}

#[derive(Debug, Clone)]
enum Op {
    Fleet(u8, u16),
    ResizeSet(u8, u16),
    SizeIg(u8, u16),
    Shutdown(u16),
    Dealloc(u16),
    Delete(u16),
    Restart(u16),
    Sweep,
    Tick(u16),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..4, 0u16..40).prop_map(|(g, n)| Op::Fleet(g, n)),
        (0u8..2, 0u16..=30).prop_map(|(s, n)| Op::ResizeSet(s, n)),
        (0u8..2, 0u16..40).prop_map(|(s, n)| Op::SizeIg(s, n)),
        any::<u16>().prop_map(Op::Shutdown),
        any::<u16>().prop_map(Op::Dealloc),
        any::<u16>().prop_map(Op::Delete),
        any::<u16>().prop_map(Op::Restart),
        Just(Op::Sweep),
        (1u16..900).prop_map(Op::Tick),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_operations_keep_invariants(ops in proptest::collection::vec(op(), 1..60), seed in 0u64..1000) {
        let quota = 25;
        let mut eng = Engine::new(seed);
        let faults = vec![respawn(1), preemption(2.0, 5.0), stall(0.3, 1200)];
        let mut c = cloud_with(quota, BootDelay::default(), faults);
        let sets = [
            c.create_scale_set(B, GpuModel::V100, 30).unwrap(),
            c.create_scale_set(B, GpuModel::T4, 30).unwrap(),
        ];
        let igs = [
            c.create_instance_group(C, GpuModel::V100).unwrap(),
            c.create_instance_group(C, GpuModel::T4).unwrap(),
        ];
        let models = [GpuModel::V100, GpuModel::T4, GpuModel::K80, GpuModel::M60];
        for op in ops {
            let n = c.instances().len();
            let pick = |k: u16| InstanceId((k as usize % n.max(1)) as u32);
            match op {
                Op::Fleet(g, k) => { c.create_fleet(&mut eng, A, &[models[g as usize]], u32::from(k)).unwrap(); }
                Op::ResizeSet(s, k) => { c.resize_scale_set(&mut eng, sets[s as usize], u32::from(k)).unwrap(); }
                Op::SizeIg(s, k) => { c.set_instance_group_size(&mut eng, igs[s as usize], u32::from(k)).unwrap(); }
                Op::Shutdown(k) if n > 0 => { let _ = c.system_shutdown(&mut eng, pick(k)); }
                Op::Dealloc(k) if n > 0 => {
                    for s in sets { let _ = c.deallocate_instance(&mut eng, s, pick(k)); }
                }
                Op::Delete(k) if n > 0 => {
                    for g in igs { let _ = c.delete_group_instance(&mut eng, g, pick(k)); }
                }
                Op::Restart(k) if n > 0 => { let _ = c.start_stopped(&mut eng, pick(k)); }
                Op::Sweep => { for r in [A, B, C] { c.manual_sweep(&mut eng, r).unwrap(); } }
                Op::Tick(s) => {
                    let t = eng.now() + Duration::from_secs(u64::from(s));
                    advance(&mut c, &mut eng, t);
                    c.provider_tick(&mut eng);
                }
                _ => {}
            }
            for r in [A, B, C] {
                for g in GpuModel::ALL {
                    let used = c.instances().iter().filter(|i| i.region == r && i.gpu == g && i.state.holds_quota()).count() as u32;
                    prop_assert_eq!(used, c.quota_used(r, g));
                    prop_assert!(used <= quota);
                }
            }
            for g in GpuModel::ALL {
                let running = c.instances().iter().filter(|i| !i.rogue && i.gpu == g && i.state == InstanceState::Running).count() as u32;
                prop_assert_eq!(running, c.running_by_model()[g.index()]);
            }
        }
        // every traced transition is legal and replays to the final state
        let mut state: BTreeMap<InstanceId, InstanceState> = BTreeMap::new();
        for ev in c.instances().iter().map(|i| i.id) {
            state.insert(ev, InstanceState::Requested);
        }
        for ev in eng.trace().records() {
            if let EventKind::InstanceState(t) = ev.kind {
                prop_assert_eq!(state[&t.instance], t.from);
                prop_assert!(t.from.can_transition(t.to));
                state.insert(t.instance, t.to);
            }
        }
        for i in c.instances() {
            prop_assert_eq!(state[&i.id], i.state);
        }
        // billing spans per instance never overlap and match the billable states
        let now = eng.now();
        c.close_billing(now);
        let mut spans: BTreeMap<InstanceId, Vec<(SimTime, SimTime)>> = BTreeMap::new();
        for b in c.billing() {
            prop_assert!(b.start <= b.end);
            spans.entry(b.instance).or_default().push((b.start, b.end));
        }
        for v in spans.values_mut() {
            v.sort();
            for w in v.windows(2) {
                prop_assert!(w[0].1 <= w[1].0);
            }
        }
    }
}
