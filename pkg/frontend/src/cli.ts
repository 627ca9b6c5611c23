/**
 * Thin process wrapper around the Python CLI.  Every binding operation
 * reaches the core through `python3 -m orthopos <subcommand>` and the
 * documented file formats; no numerics are re-derived on this side
 * except the final score contraction.
 */

import { spawnSync } from "node:child_process";

export const PYTHON = process.env.ORTHOPOS_PYTHON ?? "python3";

export interface CliResult {
  status: number;
  stdout: string;
  stderr: string;
}

export function runCliRaw(args: string[]): CliResult {
  const proc = spawnSync(PYTHON, ["-m", "orthopos", ...args], {
    encoding: "utf-8",
    maxBuffer: 1 << 28,
  });
  if (proc.error) {
    throw proc.error;
  }
  return { status: proc.status ?? -1, stdout: proc.stdout, stderr: proc.stderr };
}

export function runCli(args: string[]): string {
  const result = runCliRaw(args);
  if (result.status !== 0) {
    throw new Error(
      `orthopos ${args[0]} exited ${result.status}: ${result.stderr.trim()}`,
    );
  }
  return result.stdout;
}
