//! Process-wide allocator tuning for long training runs.

/// Asks the C allocator to keep freed memory instead of returning it to the system.
///
/// Each training step allocates and frees the same multi-megabyte intermediates. With
/// glibc's defaults those are handed back to the kernel and faulted in again on the next
/// step, which can cost a third of the run time. Call once at program start; a no-op on
/// other platforms.
pub fn retain_freed_memory() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator thresholds and is safe to call at any time.
    unsafe {
        // Older glibc rejects thresholds above 32 MiB; fall back to that ceiling.
        if libc::mallopt(libc::M_MMAP_THRESHOLD, i32::MAX) == 0 {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        }
        libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
    }
}
