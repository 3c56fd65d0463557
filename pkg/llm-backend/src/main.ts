import { hideBin } from "yargs/helpers";
import { parseConfig } from "./config.js";
import { initBackend, startServer } from "./server.js";

async function main(): Promise<void> {
  const config = parseConfig(hideBin(process.argv));
  let state;
  try {
    state = initBackend(config);
  } catch (err) {
    console.error(`startup failed: ${(err as Error).message}`);
    process.exit(1);
  }
  const server = await startServer(state, config.port);
  const address = server.address();
  const port = typeof address === "object" && address ? address.port : config.port;
  const clusters = state.adapters ? `${state.adapters.size} adapter(s)` : "no adapters";
  console.log(`serving ${config.model} (${clusters}) on http://127.0.0.1:${port}`);
}

main().catch((err) => {
  console.error(`startup failed: ${(err as Error).message}`);
  process.exit(1);
});
