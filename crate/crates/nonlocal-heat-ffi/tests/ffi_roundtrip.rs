//! Drives the C API end to end from Rust: build a grid, kernel and
//! operator, evolve, measure norms, fit the decay, and exercise the error
//! contract.

use std::ffi::CStr;
use std::ptr;

use nonlocal_heat_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(nh_last_error_message()) }
        .to_str()
        .unwrap()
        .to_owned()
}

#[test]
fn evolve_and_fit_through_the_c_api() {
    unsafe {
        let mut grid: *mut NhGrid = ptr::null_mut();
        assert_eq!(nh_grid_new(1, 20.0, 128, &mut grid), NhStatus::Ok);
        assert_eq!(nh_grid_cell_count(grid), 128);
        let spacing = nh_grid_spacing(grid);
        assert!((spacing - 0.3125).abs() < 1e-15);

        let mut raw: *mut NhKernel = ptr::null_mut();
        assert_eq!(
            nh_kernel_fractional(1, 0.5, 1.0, 1.0, &mut raw),
            NhStatus::Ok
        );
        let mut kernel: *mut NhKernel = ptr::null_mut();
        assert_eq!(nh_kernel_normalized(raw, 1.0, &mut kernel), NhStatus::Ok);
        nh_kernel_free(raw);

        let mut operator: *mut NhOperator = ptr::null_mut();
        assert_eq!(
            nh_operator_assemble(
                kernel,
                grid,
                NhBoundaryMode::Conservative,
                NhStrategy::FftConvolution,
                &mut operator,
            ),
            NhStatus::Ok
        );
        assert!(nh_operator_max_row_sum(operator) > 0.0);
        let mut dt = 0.0f64;
        assert_eq!(
            nh_max_stable_dt(operator, NhScheme::Euler, 0.9, &mut dt),
            NhStatus::Ok
        );
        assert!(dt > 0.0 && dt.is_finite());

        let values: Vec<f64> = (0..128)
            .map(|i| {
                let x = -20.0 + (i as f64 + 0.5) * spacing;
                (-x * x / 2.0).exp()
            })
            .collect();
        let mut initial: *mut NhField = ptr::null_mut();
        assert_eq!(
            nh_field_from_values(grid, values.as_ptr(), values.len(), &mut initial),
            NhStatus::Ok
        );
        assert_eq!(nh_field_len(initial), 128);

        let mut trajectory: *mut NhTrajectory = ptr::null_mut();
        assert_eq!(
            nh_evolve(
                operator,
                initial,
                4.0,
                8,
                NhScheme::Euler,
                0.9,
                &mut trajectory
            ),
            NhStatus::Ok
        );
        assert_eq!(nh_trajectory_len(trajectory), 8);

        let mass_before = nh_total_mass(initial);
        let mut initial_norm = 0.0f64;
        assert_eq!(nh_lq_norm(initial, 2.0, &mut initial_norm), NhStatus::Ok);

        let mut times = Vec::with_capacity(8);
        let mut norms = Vec::with_capacity(8);
        let mut previous_time = 0.0;
        for index in 0..8 {
            let mut time = 0.0f64;
            assert_eq!(
                nh_trajectory_time(trajectory, index, &mut time),
                NhStatus::Ok
            );
            assert!(time > previous_time);
            previous_time = time;

            let mut snapshot: *mut NhField = ptr::null_mut();
            assert_eq!(
                nh_trajectory_field(trajectory, index, &mut snapshot),
                NhStatus::Ok
            );
            let mut norm = 0.0f64;
            assert_eq!(nh_lq_norm(snapshot, 2.0, &mut norm), NhStatus::Ok);
            assert!(norm <= initial_norm);
            if index == 7 {
                assert_eq!(time, 4.0);
                let drift = (nh_total_mass(snapshot) - mass_before).abs() / mass_before;
                assert!(drift <= 1e-12, "mass drift {drift}");
                let mut buffer = vec![0.0f64; 128];
                assert_eq!(
                    nh_field_copy_values(snapshot, buffer.as_mut_ptr(), buffer.len()),
                    NhStatus::Ok
                );
                assert!(buffer.iter().all(|v| v.is_finite() && *v >= 0.0));
            }
            times.push(time);
            norms.push(norm);
            nh_field_free(snapshot);
        }

        let mut restart: *mut NhField = ptr::null_mut();
        assert_eq!(
            nh_trajectory_initial(trajectory, &mut restart),
            NhStatus::Ok
        );
        assert_eq!(nh_field_len(restart), 128);
        nh_field_free(restart);

        let mut fit = NhDecayFit {
            slope: 0.0,
            intercept: 0.0,
            r_squared: 0.0,
            window_start: 0.0,
            window_end: 0.0,
            samples_used: 0,
        };
        assert_eq!(
            nh_fit_decay(times.as_ptr(), norms.as_ptr(), times.len(), 1.0, &mut fit),
            NhStatus::Ok
        );
        assert!(fit.slope.is_finite() && fit.slope < 0.0);
        assert!(fit.r_squared <= 1.0);
        assert_eq!(fit.window_end, 4.0);
        assert!(fit.samples_used >= 7, "samples used: {}", fit.samples_used);

        let mut exponent = 0.0f64;
        assert_eq!(
            nh_theoretical_exponent(2, 2.0, 0.5, &mut exponent),
            NhStatus::Ok
        );
        assert_eq!(exponent, 1.0);
        assert_eq!(
            nh_theoretical_exponent(2, 2.0, 0.0, &mut exponent),
            NhStatus::Ok
        );
        assert_eq!(exponent, 0.5);

        nh_trajectory_free(trajectory);
        nh_field_free(initial);
        nh_operator_free(operator);
        nh_kernel_free(kernel);
        nh_grid_free(grid);
        nh_grid_free(ptr::null_mut());
        nh_field_free(ptr::null_mut());
    }
}

#[test]
fn failures_set_status_and_message() {
    unsafe {
        let mut grid: *mut NhGrid = ptr::null_mut();
        assert_eq!(
            nh_grid_new(7, 20.0, 128, &mut grid),
            NhStatus::InvalidArgument
        );
        assert!(grid.is_null());
        assert!(
            last_error().contains("dimension"),
            "message: {}",
            last_error()
        );

        assert_eq!(
            nh_grid_new(1, 20.0, 128, ptr::null_mut()),
            NhStatus::NullPointer
        );
        assert!(last_error().contains("out"));

        assert_eq!(nh_grid_new(1, 20.0, 128, &mut grid), NhStatus::Ok);
        let short = [1.0f64; 3];
        let mut field: *mut NhField = ptr::null_mut();
        assert_eq!(
            nh_field_from_values(grid, short.as_ptr(), short.len(), &mut field),
            NhStatus::InvalidArgument
        );
        assert!(last_error().contains("128"), "message: {}", last_error());

        let values = vec![1.0f64; 128];
        assert_eq!(
            nh_field_from_values(grid, values.as_ptr(), values.len(), &mut field),
            NhStatus::Ok
        );
        let mut norm = 0.0f64;
        assert_eq!(nh_lq_norm(field, 0.5, &mut norm), NhStatus::InvalidArgument);

        let mut compact: *mut NhKernel = ptr::null_mut();
        assert_eq!(nh_kernel_compact(1, 1.0, 1.0, &mut compact), NhStatus::Ok);
        let mut modulated: *mut NhKernel = ptr::null_mut();
        assert_eq!(
            nh_kernel_nonconvolution(1, 0.5, 1.0, 1.0, 0.3, &mut modulated),
            NhStatus::Ok
        );
        let mut normalized: *mut NhKernel = ptr::null_mut();
        assert_eq!(
            nh_kernel_normalized(modulated, 1.0, &mut normalized),
            NhStatus::Unsupported
        );

        assert!(nh_total_mass(ptr::null()).is_nan());
        assert_eq!(nh_field_len(ptr::null()), 0);

        nh_kernel_free(modulated);
        nh_kernel_free(compact);
        nh_field_free(field);
        nh_grid_free(grid);
    }
}

#[test]
fn generated_header_covers_the_api() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/nonlocal_heat.h"
    ))
    .unwrap();
    for name in [
        "NH_STATUS_OK",
        "nh_grid_new",
        "nh_kernel_fractional",
        "nh_operator_assemble",
        "nh_evolve",
        "nh_lq_norm",
        "nh_fit_decay",
        "nh_last_error_message",
    ] {
        assert!(header.contains(name), "header should declare {name}");
    }
}
