use canwake::attack;
use canwake::ecu::{Function, PowerMode, RecoveryPolicy, RecoveryTrigger};
use canwake::harness::config::reference_vehicle;
use canwake::units::Micros;

const SPAN: Micros = Micros::from_secs(10);

fn rcm(v: &canwake::harness::vehicle::VehicleConfig) -> usize {
    v.ecu_index("RCM").unwrap()
}

#[test]
fn repeating_the_attack_changes_nothing() {
    let v = reference_vehicle();
    let first = attack::dob_attack(&v, SPAN).unwrap();
    let again = attack::dob_attack_from(&v, Some(first.trace.final_states.clone()), SPAN).unwrap();
    assert_eq!(first.permanently_off, vec!["RCM".to_string()]);
    assert_eq!(again.permanently_off, first.permanently_off);
    assert_eq!(again.availability, first.availability);
    assert_eq!(again.ids_after, first.ids_after);
}

#[test]
fn manual_reset_ecu_stays_off_until_asked() {
    let mut v = reference_vehicle();
    let i = rcm(&v);
    v.ecus[i].recovery = RecoveryPolicy::ManualResetOnly;
    let o = attack::dob_attack(&v, SPAN).unwrap();
    assert_eq!(o.permanently_off, vec!["RCM".to_string()]);
    assert_eq!(o.availability.is_available(Function::Pkes), Some(false));

    let mut st = o.trace.final_states[i].clone();
    assert!(!st.attempt_recovery(&v.ecus[i], RecoveryTrigger::Automatic));
    assert_eq!(st.mode, PowerMode::BusOff);
    assert!(st.attempt_recovery(&v.ecus[i], RecoveryTrigger::UserRequest));
    assert_eq!(st.mode, PowerMode::Sleep);
    assert_eq!(st.tec, 0);

    let mut st = o.trace.final_states[i].clone();
    st.battery_reset(&v.ecus[i]);
    assert_eq!(st.mode, PowerMode::Sleep);
}

#[test]
fn never_recover_ignores_user_request() {
    let v = reference_vehicle();
    let i = rcm(&v);
    let o = attack::dob_attack(&v, SPAN).unwrap();
    let mut st = o.trace.final_states[i].clone();
    assert!(!st.attempt_recovery(&v.ecus[i], RecoveryTrigger::UserRequest));
    st.battery_reset(&v.ecus[i]);
    assert_eq!(st.mode, PowerMode::Sleep);
}

#[test]
fn auto_recovering_vehicle_loses_nothing() {
    let mut v = reference_vehicle();
    for e in &mut v.ecus {
        e.recovery = RecoveryPolicy::AutoRecover;
    }
    let o = attack::dob_attack(&v, SPAN).unwrap();
    assert!(o.permanently_off.is_empty());
    assert_eq!(o.ids_after, o.ids_before);
}
