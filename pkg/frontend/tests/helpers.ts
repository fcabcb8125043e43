/** Test-side utilities: strict NPY I/O, a seeded PRNG, and process plumbing. */
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";

const MAGIC = Uint8Array.from([0x93, 0x4e, 0x55, 0x4d, 0x50, 0x59]); // \x93NUMPY

export function writeNpy(path: string, rows: number, cols: number, data: Float32Array): void {
  let header = `{'descr': '<f4', 'fortran_order': False, 'shape': (${rows}, ${cols}), }`;
  const unpadded = 6 + 2 + 2 + header.length + 1;
  header = header + " ".repeat((64 - (unpadded % 64)) % 64) + "\n";

  const buf = Buffer.alloc(10 + header.length + data.length * 4);
  Buffer.from(MAGIC).copy(buf, 0);
  buf[6] = 1; // version (1, 0)
  buf[7] = 0;
  buf.writeUInt16LE(header.length, 8);
  buf.write(header, 10, "latin1");
  Buffer.from(data.buffer, data.byteOffset, data.byteLength).copy(buf, 10 + header.length);
  writeFileSync(path, buf);
}

export function readNpy(path: string): { rows: number; cols: number; data: Float32Array } {
  const buf = readFileSync(path);
  if (!buf.subarray(0, 6).equals(Buffer.from(MAGIC))) {
    throw new Error(`${path}: bad NPY magic`);
  }
  const headerLen = buf.readUInt16LE(8);
  const header = buf.subarray(10, 10 + headerLen).toString("latin1");
  const shapeMatch = header.match(/'shape':\s*\((\d+),\s*(\d+)\)/);
  if (!header.includes("'<f4'") || !shapeMatch) {
    throw new Error(`${path}: unsupported NPY header: ${header}`);
  }
  const rows = parseInt(shapeMatch[1], 10);
  const cols = parseInt(shapeMatch[2], 10);
  const payload = buf.subarray(10 + headerLen);
  const data = new Float32Array(rows * cols);
  for (let i = 0; i < data.length; i++) {
    data[i] = payload.readFloatLE(i * 4);
  }
  return { rows, cols, data };
}

/** mulberry32: tiny deterministic PRNG for fixture generation. */
export function prng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomMatrix(rand: () => number, rows: number, cols: number): Float32Array {
  const data = new Float32Array(rows * cols);
  for (let i = 0; i < data.length; i++) {
    data[i] = Math.fround(rand() * 2 - 1);
  }
  return data;
}

export function makeTempDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix));
}

export function runCli(args: string[], cwd?: string): { code: number; stdout: string; stderr: string } {
  const proc = spawnSync("python3", ["-m", "air_engine.cli", ...args], {
    cwd,
    encoding: "utf8",
  });
  return { code: proc.status ?? -1, stdout: proc.stdout, stderr: proc.stderr };
}

export async function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const address = srv.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port assigned"));
        return;
      }
      const port = address.port;
      srv.close(() => resolve(port));
    });
  });
}

export interface ServerHandle {
  proc: ChildProcess;
  baseUrl: string;
}

export async function startServer(): Promise<ServerHandle> {
  const port = await freePort();
  const proc = spawn("python3", ["-m", "air_engine.cli", "serve", "--port", String(port)], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 30000;
  for (;;) {
    try {
      const response = await fetch(`${baseUrl}/health`);
      if (response.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      proc.kill();
      throw new Error("engine service did not come up within 30s");
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  return { proc, baseUrl };
}

export function stopServer(handle: ServerHandle): void {
  handle.proc.kill("SIGTERM");
}

export function parseScoresCsv(text: string): {
  m: number;
  d_ot: number;
  d_cos: number;
  converged: boolean;
  selected: boolean;
}[] {
  const lines = text.trim().split("\n");
  return lines.slice(1).map((line) => {
    const [m, dOt, dCos, converged, selected] = line.split(",");
    return {
      m: parseInt(m, 10),
      d_ot: parseFloat(dOt),
      d_cos: parseFloat(dCos),
      converged: converged === "true",
      selected: selected === "true",
    };
  });
}
