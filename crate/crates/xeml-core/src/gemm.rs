//! Thin safe wrapper over the f32 matrix-multiply kernel.

/// C[m,n] = alpha * A[m,k] * B[k,n] + beta * C, all row-major contiguous.
pub(crate) fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    b: &[f32],
    beta: f32,
    c: &mut [f32],
) {
    sgemm_strided(
        m, k, n, alpha, a, k as isize, 1, b, n as isize, 1, beta, c,
    );
}

/// As [`sgemm`] but with explicit row/column strides on A and B, which lets
/// callers pass transposed views without materializing them. C stays
/// row-major contiguous.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgemm_strided(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    beta: f32,
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    let max_index = |rows: usize, cols: usize, rs: isize, cs: isize| -> usize {
        let r = (rows - 1) as isize * rs;
        let c = (cols - 1) as isize * cs;
        debug_assert!(rs >= 0 && cs >= 0);
        (r + c) as usize
    };
    if k > 0 {
        assert!(max_index(m, k, rsa, csa) < a.len(), "A view out of bounds");
        assert!(max_index(k, n, rsb, csb) < b.len(), "B view out of bounds");
    }
    assert!(m * n <= c.len(), "C buffer too small");
    // Bounds established above; the kernel only reads/writes inside the views.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
