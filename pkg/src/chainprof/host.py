"""Host introspection for profile metadata."""
import os
import platform

from chainprof.model import HostDescriptor


def _cpuinfo():
    model, cores, packages = None, None, set()
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                key, _, value = line.partition(":")
                key, value = key.strip(), value.strip()
                if key == "model name" and model is None:
                    model = value
                elif key == "cpu cores" and cores is None:
                    cores = int(value)
                elif key == "physical id":
                    packages.add(value)
    except OSError:
        pass
    if cores is not None:
        cores *= max(1, len(packages))
    return model, cores


def detect_host() -> HostDescriptor:
    model, cores = _cpuinfo()
    try:
        mem_mb = os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES") // (1024 * 1024)
    except (ValueError, OSError, AttributeError):
        mem_mb = 1024
    return HostDescriptor(
        cpu_model=model or platform.processor() or platform.machine() or "unknown",
        physical_cores=cores or os.cpu_count() or 1,
        total_mem_mb=max(1, int(mem_mb)),
    )
