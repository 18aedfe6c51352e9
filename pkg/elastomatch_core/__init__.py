# ElastoMatch core package
