#!/usr/bin/env node
import { extractDataset } from "./extract.js";
import { writeRecordsJsonl } from "./records.js";

function main(): number {
  const args = process.argv.slice(2);
  let out = "records.jsonl";
  let root: string | undefined;
  for (let i = 0; i < args.length; i++) {
    if (args[i] === "--out") {
      out = args[++i];
    } else if (args[i].startsWith("-")) {
      console.error(`unknown flag: ${args[i]}`);
      return 1;
    } else if (root === undefined) {
      root = args[i];
    } else {
      console.error("expected exactly one dataset directory");
      return 1;
    }
  }
  if (!root) {
    console.error("usage: gradsurgeon-extract <dataset-dir> [--out records.jsonl]");
    return 1;
  }
  try {
    const { records, skipped } = extractDataset(root);
    for (const skip of skipped) {
      console.error(`skipped ${skip.path}: ${skip.reason}`);
    }
    writeRecordsJsonl(out, records);
    console.log(`wrote ${records.length} records to ${out} (${skipped.length} skipped)`);
    return 0;
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
}

process.exit(main());
